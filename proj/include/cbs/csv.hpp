#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cbs/common.hpp"

namespace cbs {

struct CsvSchema {
    std::string treatment;
    std::string outcome;
    std::vector<std::string> unpenalized;  // adjusted but never penalized
    char delimiter = ',';
};

struct IngestResult {
    FeatureMatrix covariates;  // every column not claimed by a role
    Sample outcome;
    ArmLabels treatment;
    Matrix unpenalized;  // column-aligned with schema order
    std::vector<std::string> unpenalized_names;
    std::uint64_t input_digest = 0;
};

namespace detail {

inline bool is_missing_token(std::string_view t) {
    return t.empty() || t == "NA" || t == "NaN" || t == "nan" || t == "na";
}

inline bool parse_double(std::string_view t, double& out) {
    const char* first = t.data();
    const char* last = t.data() + t.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && std::isfinite(out);
}

inline void split_line(const std::string& line, char delim, std::vector<std::string_view>& out) {
    out.clear();
    std::size_t start = 0;
    std::string_view sv(line);
    while (true) {
        const std::size_t pos = sv.find(delim, start);
        if (pos == std::string_view::npos) {
            out.push_back(sv.substr(start));
            break;
        }
        out.push_back(sv.substr(start, pos - start));
        start = pos + 1;
    }
}

}  // namespace detail

/// Strict delimiter-separated ingestion: header row required, treatment
/// tokens must be exactly 0/1, all other role columns must parse as
/// finite decimals. Any missing cell rejects the file with a list of
/// (data row, column) coordinates; data rows are numbered from 1 below
/// the header. No imputation.
inline IngestResult ingest_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw invalid_input("ingest_csv: cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw invalid_input("ingest_csv: empty file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::vector<std::string_view> tokens;
    detail::split_line(line, schema.delimiter, tokens);
    std::vector<std::string> header(tokens.begin(), tokens.end());
    const std::size_t ncol = header.size();

    auto find_col = [&](const std::string& name) {
        for (std::size_t j = 0; j < ncol; ++j) {
            if (header[j] == name) return j;
        }
        throw invalid_input("ingest_csv: column '" + name + "' not found in header");
    };

    const std::size_t treat_col = find_col(schema.treatment);
    const std::size_t out_col = find_col(schema.outcome);
    if (treat_col == out_col)
        throw invalid_input("ingest_csv: treatment and outcome name the same column");

    std::vector<std::size_t> unpen_cols;
    for (const auto& nm : schema.unpenalized) {
        const std::size_t j = find_col(nm);
        if (j == treat_col || j == out_col)
            throw invalid_input("ingest_csv: unpenalized column '" + nm +
                                "' conflicts with another role");
        unpen_cols.push_back(j);
    }

    std::vector<std::size_t> cov_cols;
    std::vector<std::string> cov_names;
    for (std::size_t j = 0; j < ncol; ++j) {
        if (j == treat_col || j == out_col) continue;
        if (std::find(unpen_cols.begin(), unpen_cols.end(), j) != unpen_cols.end()) continue;
        cov_cols.push_back(j);
        cov_names.push_back(header[j]);
    }
    if (cov_cols.empty()) throw invalid_input("ingest_csv: no covariate columns left");

    std::vector<double> cov_data;  // row-major while reading
    std::vector<double> y;
    std::vector<std::uint8_t> d;
    std::vector<double> unpen_data;
    std::vector<std::string> errors;
    std::uint64_t digest = fnv1a64(line);

    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row;
        digest = fnv1a64(line, digest);
        detail::split_line(line, schema.delimiter, tokens);
        if (tokens.size() != ncol) {
            errors.push_back("data row " + std::to_string(row) + ": expected " +
                             std::to_string(ncol) + " fields, got " +
                             std::to_string(tokens.size()));
            continue;
        }
        bool row_ok = true;
        auto flag = [&](std::size_t j, const char* what) {
            errors.push_back("data row " + std::to_string(row) + ", column '" + header[j] +
                             "': " + what);
            row_ok = false;
        };
        // treatment
        std::uint8_t di = 0;
        {
            const auto t = tokens[treat_col];
            if (detail::is_missing_token(t)) flag(treat_col, "missing cell");
            else if (t == "0") di = 0;
            else if (t == "1") di = 1;
            else flag(treat_col, "treatment value is not 0 or 1");
        }
        double yi = 0.0;
        {
            const auto t = tokens[out_col];
            if (detail::is_missing_token(t)) flag(out_col, "missing cell");
            else if (!detail::parse_double(t, yi)) flag(out_col, "malformed numeric");
        }
        std::vector<double> urow(unpen_cols.size());
        for (std::size_t u = 0; u < unpen_cols.size(); ++u) {
            const auto t = tokens[unpen_cols[u]];
            if (detail::is_missing_token(t)) flag(unpen_cols[u], "missing cell");
            else if (!detail::parse_double(t, urow[u])) flag(unpen_cols[u], "malformed numeric");
        }
        std::vector<double> crow(cov_cols.size());
        for (std::size_t cidx = 0; cidx < cov_cols.size(); ++cidx) {
            const auto t = tokens[cov_cols[cidx]];
            if (detail::is_missing_token(t)) flag(cov_cols[cidx], "missing cell");
            else if (!detail::parse_double(t, crow[cidx])) flag(cov_cols[cidx], "malformed numeric");
        }
        if (!row_ok) continue;
        d.push_back(di);
        y.push_back(yi);
        unpen_data.insert(unpen_data.end(), urow.begin(), urow.end());
        cov_data.insert(cov_data.end(), crow.begin(), crow.end());
    }

    if (!errors.empty()) {
        std::ostringstream msg;
        msg << "ingest_csv: " << errors.size() << " bad cell(s)/row(s), no imputation attempted:";
        const std::size_t cap = std::min<std::size_t>(errors.size(), 50);
        for (std::size_t k = 0; k < cap; ++k) msg << "\n  " << errors[k];
        if (errors.size() > cap) msg << "\n  ... (" << errors.size() - cap << " more)";
        throw invalid_input(msg.str());
    }
    const std::size_t n = y.size();
    if (n == 0) throw invalid_input("ingest_csv: no data rows in " + path);

    // transpose row-major reads into column-major matrices
    Matrix cov(n, cov_cols.size());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < cov_cols.size(); ++j)
            cov.at(i, j) = cov_data[i * cov_cols.size() + j];
    Matrix unpen(n, unpen_cols.size());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t u = 0; u < unpen_cols.size(); ++u)
            unpen.at(i, u) = unpen_data[i * unpen_cols.size() + u];

    IngestResult out{FeatureMatrix(std::move(cov), std::move(cov_names)), Sample(std::move(y)),
                     ArmLabels(std::move(d)), std::move(unpen), schema.unpenalized, digest};
    return out;
}

}  // namespace cbs
