#pragma once

// Cohort representation, train/estimation split and CSV ingestion.

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "curematch/csv.hpp"
#include "curematch/error.hpp"
#include "curematch/rng.hpp"

namespace curematch {

using Index = Eigen::Index;
using IndexList = std::vector<Index>;

enum class ColumnKind { binary, continuous };

/// n x p covariate matrix with column metadata. Immutable once built.
class Covariates {
public:
    Covariates() = default;

    /// Validates the matrix; names default to X1..Xp and column kinds are
    /// inferred when `kinds` is empty (a column holding only 0/1 is binary).
    explicit Covariates(Eigen::MatrixXd values, std::vector<std::string> names = {},
               std::vector<ColumnKind> kinds = {})
        : values_(std::move(values)), names_(std::move(names)), kinds_(std::move(kinds)) {
        const Index n = values_.rows();
        const Index p = values_.cols();
        if (p < 1) throw DataError("covariates: need at least one column");
        if (n < 2) throw DataError("covariates: need at least two rows");
        if (names_.empty()) {
            for (Index j = 0; j < p; ++j) names_.push_back("X" + std::to_string(j + 1));
        }
        if (static_cast<Index>(names_.size()) != p) {
            throw DataError("covariates: " + std::to_string(names_.size()) + " names for " +
                            std::to_string(p) + " columns");
        }
        if (!values_.allFinite()) throw DataError("covariates: missing or non-finite value");
        const bool infer = kinds_.empty();
        if (!infer && static_cast<Index>(kinds_.size()) != p) {
            throw DataError("covariates: kind list length mismatch");
        }
        if (infer) kinds_.resize(static_cast<std::size_t>(p));
        for (Index j = 0; j < p; ++j) {
            const auto col = values_.col(j);
            const bool is01 = ((col.array() == 0.0) || (col.array() == 1.0)).all();
            auto& kind = kinds_[static_cast<std::size_t>(j)];
            if (infer) {
                kind = is01 ? ColumnKind::binary : ColumnKind::continuous;
            } else if (kind == ColumnKind::binary && !is01) {
                throw DataError("covariates: binary column '" + names_[static_cast<std::size_t>(j)] +
                                "' holds values other than 0/1");
            }
        }
    }

    [[nodiscard]] const Eigen::MatrixXd& values() const noexcept { return values_; }
    [[nodiscard]] const std::vector<std::string>& names() const noexcept { return names_; }
    [[nodiscard]] const std::vector<ColumnKind>& kinds() const noexcept { return kinds_; }
    [[nodiscard]] Index rows() const noexcept { return values_.rows(); }
    [[nodiscard]] Index cols() const noexcept { return values_.cols(); }

    friend bool operator==(const Covariates& a, const Covariates& b) {
        return a.values_.rows() == b.values_.rows() && a.values_.cols() == b.values_.cols() &&
               a.values_ == b.values_ && a.names_ == b.names_ && a.kinds_ == b.kinds_;
    }

private:
    Eigen::MatrixXd values_;
    std::vector<std::string> names_;
    std::vector<ColumnKind> kinds_;
};

/// Right-censored observations with a cure horizon H:
/// y = min(T, C, H), delta = 1{T < C, T < H}, z = treatment arm.
class Cohort {
public:
    Cohort() = default;

    Cohort(Covariates x, Eigen::VectorXd y, std::vector<int> delta, std::vector<int> z,
           double horizon_h)
        : x_(std::move(x)), y_(std::move(y)), delta_(std::move(delta)), z_(std::move(z)),
          horizon_h_(horizon_h) {
        const Index n = x_.rows();
        if (y_.size() != n || static_cast<Index>(delta_.size()) != n ||
            static_cast<Index>(z_.size()) != n) {
            throw DataError("cohort: y/delta/z lengths differ from covariate rows");
        }
        if (!(horizon_h_ > 0.0) || !std::isfinite(horizon_h_)) {
            throw DataError("cohort: horizon must be positive");
        }
        bool has0 = false;
        bool has1 = false;
        for (Index i = 0; i < n; ++i) {
            const auto k = static_cast<std::size_t>(i);
            const std::string row = " (row " + std::to_string(i + 1) + ")";
            if (!(y_[i] > 0.0) || !std::isfinite(y_[i])) throw DataError("cohort: nonpositive time" + row);
            if (y_[i] > horizon_h_) throw DataError("cohort: time beyond horizon" + row);
            if (delta_[k] != 0 && delta_[k] != 1) throw DataError("cohort: delta must be 0/1" + row);
            if (z_[k] != 0 && z_[k] != 1) throw DataError("cohort: z must be 0/1" + row);
            if (delta_[k] == 1 && !(y_[i] < horizon_h_)) {
                throw DataError("cohort: event reported at the horizon" + row);
            }
            (z_[k] ? has1 : has0) = true;
        }
        if (!has0 || !has1) throw DataError("cohort: empty treatment arm");
    }

    [[nodiscard]] const Covariates& covariates() const noexcept { return x_; }
    [[nodiscard]] const Eigen::MatrixXd& x() const noexcept { return x_.values(); }
    [[nodiscard]] const Eigen::VectorXd& y() const noexcept { return y_; }
    [[nodiscard]] const std::vector<int>& delta() const noexcept { return delta_; }
    [[nodiscard]] const std::vector<int>& z() const noexcept { return z_; }
    [[nodiscard]] double horizon() const noexcept { return horizon_h_; }
    [[nodiscard]] Index size() const noexcept { return x_.rows(); }
    [[nodiscard]] Index num_covariates() const noexcept { return x_.cols(); }

    [[nodiscard]] Index arm_size(int arm) const {
        return std::count(z_.begin(), z_.end(), arm);
    }

    friend bool operator==(const Cohort& a, const Cohort& b) {
        return a.x_ == b.x_ && a.y_.size() == b.y_.size() && a.y_ == b.y_ &&
               a.delta_ == b.delta_ && a.z_ == b.z_ && a.horizon_h_ == b.horizon_h_;
    }

private:
    Covariates x_;
    Eigen::VectorXd y_;
    std::vector<int> delta_;
    std::vector<int> z_;
    double horizon_h_ = 0.0;
};

struct Split {
    IndexList train_idx;  // ascending
    IndexList est_idx;    // ascending
    double train_fraction = 0.0;
    std::uint64_t seed = 0;

    friend bool operator==(const Split&, const Split&) = default;
};

/// Rows of `rows` whose arm equals `arm`, order preserved.
inline IndexList rows_in_arm(const Cohort& c, const IndexList& rows, int arm) {
    IndexList out;
    for (Index i : rows) {
        if (c.z()[static_cast<std::size_t>(i)] == arm) out.push_back(i);
    }
    return out;
}

/// Uniform random split; the training part has round(fraction * n) rows.
inline Split split_cohort(const Cohort& cohort, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw DataError("split: train fraction must lie strictly between 0 and 1");
    }
    const Index n = cohort.size();
    if (cohort.arm_size(0) < 2 || cohort.arm_size(1) < 2) {
        throw DataError("split: need at least two subjects per arm");
    }
    const auto m = static_cast<Index>(std::llround(train_fraction * static_cast<double>(n)));
    if (m < 1 || m >= n) throw DataError("split: fraction leaves one side empty");

    IndexList perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    Rng rng(derive_seed(seed, {0x5u}));
    // Fisher-Yates with an explicit bounded draw so the permutation does not
    // depend on the standard library's distribution implementation.
    for (Index i = n - 1; i > 0; --i) {
        const auto bound = static_cast<std::uint64_t>(i + 1);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t r = rng();
        while (r >= limit) r = rng();
        std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(r % bound)]);
    }
    Split s;
    s.train_fraction = train_fraction;
    s.seed = seed;
    s.train_idx.assign(perm.begin(), perm.begin() + m);
    s.est_idx.assign(perm.begin() + m, perm.end());
    std::sort(s.train_idx.begin(), s.train_idx.end());
    std::sort(s.est_idx.begin(), s.est_idx.end());
    for (int arm : {0, 1}) {
        if (rows_in_arm(cohort, s.train_idx, arm).empty()) {
            throw DataError("split: training set has no subjects in arm " + std::to_string(arm));
        }
        if (rows_in_arm(cohort, s.est_idx, arm).empty()) {
            throw DataError("split: estimation set has no subjects in arm " + std::to_string(arm));
        }
    }
    return s;
}

/// Logical-to-physical column mapping. Empty `covariates` means every column
/// that is not y, delta or z.
struct CohortSchema {
    std::string y = "y";
    std::string delta = "delta";
    std::string z = "z";
    std::vector<std::string> covariates;
};

inline void to_json(nlohmann::json& j, const CohortSchema& s) {
    j = {{"y", s.y}, {"delta", s.delta}, {"z", s.z}, {"covariates", s.covariates}};
}

inline void from_json(const nlohmann::json& j, CohortSchema& s) {
    s.y = j.value("y", std::string("y"));
    s.delta = j.value("delta", std::string("delta"));
    s.z = j.value("z", std::string("z"));
    s.covariates = j.value("covariates", std::vector<std::string>{});
}

/// Builds a cohort from a parsed table. Rows with y > H are administratively
/// censored at H (y <- H, delta <- 0).
inline Cohort cohort_from_table(const csv::Table& t, const CohortSchema& schema, double horizon_h,
                                const std::string& source = "input") {
    auto need = [&](const std::string& name) {
        auto c = t.column(name);
        if (!c) throw SchemaError(source + ": missing column \"" + name + "\"");
        return *c;
    };
    const std::size_t cy = need(schema.y);
    const std::size_t cd = need(schema.delta);
    const std::size_t cz = need(schema.z);
    std::vector<std::size_t> cx;
    std::vector<std::string> names;
    if (schema.covariates.empty()) {
        for (std::size_t j = 0; j < t.header.size(); ++j) {
            if (j != cy && j != cd && j != cz) {
                cx.push_back(j);
                names.push_back(t.header[j]);
            }
        }
    } else {
        for (const auto& name : schema.covariates) {
            cx.push_back(need(name));
            names.push_back(name);
        }
    }
    if (!(horizon_h > 0.0)) throw DataError(source + ": horizon must be positive");
    const auto n = static_cast<Index>(t.rows.size());
    Eigen::MatrixXd xs(n, static_cast<Index>(cx.size()));
    Eigen::VectorXd y(n);
    std::vector<int> delta(static_cast<std::size_t>(n));
    std::vector<int> z(static_cast<std::size_t>(n));

    auto num = [&](Index i, std::size_t col) {
        const auto& cell = t.rows[static_cast<std::size_t>(i)][col];
        auto v = csv::parse_double(cell);
        if (!v || !std::isfinite(*v)) {
            throw DataError(source + ": non-numeric cell \"" + cell + "\" at row " +
                            std::to_string(i + 1) + ", column \"" + t.header[col] + "\"");
        }
        return *v;
    };
    auto flag = [&](Index i, std::size_t col) {
        const double v = num(i, col);
        if (v != 0.0 && v != 1.0) {
            throw DataError(source + ": value must be 0 or 1 at row " + std::to_string(i + 1) +
                            ", column \"" + t.header[col] + "\"");
        }
        return static_cast<int>(v);
    };

    for (Index i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        for (std::size_t j = 0; j < cx.size(); ++j) xs(i, static_cast<Index>(j)) = num(i, cx[j]);
        double yi = num(i, cy);
        int di = flag(i, cd);
        if (!(yi > 0.0)) {
            throw DataError(source + ": nonpositive time at row " + std::to_string(i + 1) +
                            ", column \"" + t.header[cy] + "\"");
        }
        if (yi > horizon_h) {
            yi = horizon_h;
            di = 0;
        } else if (di == 1 && yi == horizon_h) {
            throw DataError(source + ": event at exactly the horizon at row " + std::to_string(i + 1));
        }
        y[i] = yi;
        delta[k] = di;
        z[k] = flag(i, cz);
    }
    for (int arm : {0, 1}) {
        if (std::find(z.begin(), z.end(), arm) == z.end()) {
            throw DataError(source + ": treatment arm " + std::to_string(arm) + " is empty");
        }
    }
    return Cohort(Covariates(std::move(xs), std::move(names)), std::move(y), std::move(delta),
                  std::move(z), horizon_h);
}

inline Cohort load_cohort(const std::string& path, const CohortSchema& schema, double horizon_h) {
    return cohort_from_table(csv::read_file(path), schema, horizon_h, path);
}

/// Writes covariate columns followed by y, delta, z.
inline void write_cohort(const Cohort& c, const std::string& path) {
    csv::write_file(path, [&](std::ostream& out) {
        std::vector<std::string> cells = c.covariates().names();
        cells.insert(cells.end(), {"y", "delta", "z"});
        csv::write_row(out, cells);
        for (Index i = 0; i < c.size(); ++i) {
            cells.clear();
            for (Index j = 0; j < c.num_covariates(); ++j) cells.push_back(csv::format_double(c.x()(i, j)));
            cells.push_back(csv::format_double(c.y()[i]));
            cells.push_back(std::to_string(c.delta()[static_cast<std::size_t>(i)]));
            cells.push_back(std::to_string(c.z()[static_cast<std::size_t>(i)]));
            csv::write_row(out, cells);
        }
    });
}

/// Copy of `c` whose continuous columns are centred and scaled with the
/// training rows' mean and standard deviation. Binary columns are untouched.
inline Cohort standardize(const Cohort& c, const Split& split) {
    Eigen::MatrixXd x = c.x();
    const auto& kinds = c.covariates().kinds();
    const auto m = static_cast<double>(split.train_idx.size());
    for (Index j = 0; j < x.cols(); ++j) {
        if (kinds[static_cast<std::size_t>(j)] != ColumnKind::continuous) continue;
        double mean = 0.0;
        for (Index i : split.train_idx) mean += x(i, j);
        mean /= m;
        double ss = 0.0;
        for (Index i : split.train_idx) ss += (x(i, j) - mean) * (x(i, j) - mean);
        const double sd = m > 1.0 ? std::sqrt(ss / (m - 1.0)) : 0.0;
        x.col(j).array() -= mean;
        if (sd > 0.0) x.col(j) /= sd;
    }
    return Cohort(Covariates(std::move(x), c.covariates().names(), c.covariates().kinds()), c.y(),
                  c.delta(), c.z(), c.horizon());
}

}  // namespace curematch
