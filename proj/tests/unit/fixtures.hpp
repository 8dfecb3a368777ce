#pragma once

#include "zsl/vectorize.hpp"

#include <string>
#include <vector>

namespace zsl::testing {

inline FeatureMatrix dense_matrix(const std::vector<std::vector<double>>& rows) {
    const std::size_t d = rows.empty() ? 0 : rows.front().size();
    std::vector<ColumnInfo> cols;
    for (std::size_t j = 0; j < d; ++j) {
        cols.push_back({"f" + std::to_string(j), ColumnOrigin::term});
    }
    FeatureMatrix X(std::move(cols));
    for (const auto& r : rows) {
        SparseVector v;
        for (std::size_t j = 0; j < r.size(); ++j) {
            if (r[j] != 0) {
                v.indices.push_back(static_cast<std::uint32_t>(j));
                v.values.push_back(r[j]);
            }
        }
        X.append_row(v);
    }
    return X;
}

inline SparseVector sparse(const std::vector<double>& dense) {
    SparseVector v;
    for (std::size_t j = 0; j < dense.size(); ++j) {
        if (dense[j] != 0) {
            v.indices.push_back(static_cast<std::uint32_t>(j));
            v.values.push_back(dense[j]);
        }
    }
    return v;
}

} // namespace zsl::testing
