#pragma once

// Exact K-nearest-neighbour matching within each treatment arm under a
// diagonal metric. Ties in distance go to the smaller subject index.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "curematch/csv.hpp"
#include "curematch/data.hpp"
#include "curematch/error.hpp"
#include "curematch/metric.hpp"

namespace curematch {

struct MatchedGroup {
    Index query_idx = 0;
    IndexList m1;  // treated neighbours, nearest first
    IndexList m0;  // control neighbours, nearest first
    WeightKind metric_kind = WeightKind::custom;
    double d1_max = 0.0;
    double d0_max = 0.0;

    friend bool operator==(const MatchedGroup&, const MatchedGroup&) = default;
};

namespace detail {

inline constexpr Index kPanel = 16;

/// Candidates of one arm packed in panels of kPanel rows: for each panel the
/// active coordinates follow one another, kPanel values each. Padding rows
/// repeat the last candidate and are never selected.
struct ArmBlock {
    IndexList ids;
    std::vector<double> panels;
    Index n_panels = 0;
};

struct Neighbour {
    double d2;
    Index pos;
    bool operator<(const Neighbour& o) const noexcept {
        return d2 < o.d2 || (d2 == o.d2 && pos < o.pos);
    }
};

/// Squared weighted distances from xq to the kPanel candidates of one panel.
/// Every lane accumulates coordinates in order, matching wdist2 bit for bit.
inline void panel_distances(const double* panel, const double* w, const double* xq, Index q, double* out) {
#if defined(__GNUC__)
    typedef double v4 __attribute__((vector_size(32)));
    v4 a0 = {}, a1 = {}, a2 = {}, a3 = {};
    for (Index d = 0; d < q; ++d) {
        const double wd = w[d];
        const double xd = xq[d];
        const double* v = panel + d * kPanel;
        v4 x0, x1, x2, x3;
        std::memcpy(&x0, v, sizeof x0);
        std::memcpy(&x1, v + 4, sizeof x1);
        std::memcpy(&x2, v + 8, sizeof x2);
        std::memcpy(&x3, v + 12, sizeof x3);
        x0 -= xd;
        x1 -= xd;
        x2 -= xd;
        x3 -= xd;
        a0 += wd * (x0 * x0);
        a1 += wd * (x1 * x1);
        a2 += wd * (x2 * x2);
        a3 += wd * (x3 * x3);
    }
    std::memcpy(out, &a0, sizeof a0);
    std::memcpy(out + 4, &a1, sizeof a1);
    std::memcpy(out + 8, &a2, sizeof a2);
    std::memcpy(out + 12, &a3, sizeof a3);
#else
    double acc[kPanel] = {};
    for (Index d = 0; d < q; ++d) {
        const double* v = panel + d * kPanel;
        for (Index c = 0; c < kPanel; ++c) {
            const double diff = v[c] - xq[d];
            acc[c] += w[d] * (diff * diff);
        }
    }
    std::copy(acc, acc + kPanel, out);
#endif
}

/// The k smallest entries of `dist` by (distance, position), ascending.
inline void select_k(std::span<const double> dist, Index k, std::vector<Neighbour>& heap) {
    heap.clear();
    const auto n = static_cast<Index>(dist.size());
    for (Index j = 0; j < k; ++j) heap.push_back({dist[static_cast<std::size_t>(j)], j});
    std::make_heap(heap.begin(), heap.end());
    for (Index j = k; j < n; ++j) {
        const double d = dist[static_cast<std::size_t>(j)];
        // Positions increase along the scan, so equal distances never displace.
        if (d < heap.front().d2) {
            std::pop_heap(heap.begin(), heap.end());
            heap.back() = {d, j};
            std::push_heap(heap.begin(), heap.end());
        }
    }
    std::sort_heap(heap.begin(), heap.end());
}

inline void match_range(const Eigen::MatrixXd& features, const std::vector<Index>& dims,
                        const Eigen::VectorXd& w_active, const ArmBlock (&blocks)[2], const IndexList& queries,
                        Index k, WeightKind kind, std::size_t begin, std::size_t end,
                        std::vector<MatchedGroup>& out) {
    std::vector<double> dist;
    std::vector<Neighbour> heap;
    const auto q = static_cast<Index>(dims.size());
    Eigen::VectorXd xq(q);
    for (std::size_t t = begin; t < end; ++t) {
        const Index query = queries[t];
        for (Index d = 0; d < q; ++d) xq[d] = features(query, dims[static_cast<std::size_t>(d)]);
        MatchedGroup g;
        g.query_idx = query;
        g.metric_kind = kind;
        for (int arm : {1, 0}) {
            const ArmBlock& b = blocks[arm];
            const auto nb = static_cast<Index>(b.ids.size());
            dist.resize(static_cast<std::size_t>(b.n_panels * kPanel));
            for (Index pb = 0; pb < b.n_panels; ++pb) {
                panel_distances(b.panels.data() + pb * q * kPanel, w_active.data(), xq.data(), q,
                                dist.data() + pb * kPanel);
            }
            dist.resize(static_cast<std::size_t>(nb));
            select_k(dist, k, heap);
            IndexList& m = arm == 1 ? g.m1 : g.m0;
            m.reserve(static_cast<std::size_t>(k));
            for (const auto& h : heap) m.push_back(b.ids[static_cast<std::size_t>(h.pos)]);
            (arm == 1 ? g.d1_max : g.d0_max) = std::sqrt(heap.back().d2);
        }
        out[t] = std::move(g);
    }
}

}  // namespace detail

/// For every query row, the k nearest treated and k nearest control rows of
/// `pool` under `w`. Results follow the order of `queries`; `jobs` threads
/// share the queries without affecting the output.
inline std::vector<MatchedGroup> knn_match(const Eigen::MatrixXd& features, const std::vector<int>& z,
                                           const IndexList& pool, const IndexList& queries,
                                           const WeightMatrix& w, Index k, int jobs = 1) {
    if (w.size() != features.cols()) throw DataError("knn_match: weight length does not match covariates");
    if (!(w.weights().array() > 0.0).any()) throw DegenerateMetricError();
    if (k < 1) throw DataError("knn_match: k must be positive");

    std::vector<Index> dims;
    for (Index j = 0; j < w.size(); ++j) {
        if (w.weights()[j] > 0.0) dims.push_back(j);
    }
    const auto q = static_cast<Index>(dims.size());
    Eigen::VectorXd w_active(q);
    for (Index d = 0; d < q; ++d) w_active[d] = w.weights()[dims[static_cast<std::size_t>(d)]];

    IndexList sorted_pool = pool;
    std::sort(sorted_pool.begin(), sorted_pool.end());
    detail::ArmBlock blocks[2];
    for (Index i : sorted_pool) blocks[z[static_cast<std::size_t>(i)]].ids.push_back(i);
    for (auto& b : blocks) {
        const auto nb = static_cast<Index>(b.ids.size());
        b.n_panels = (nb + detail::kPanel - 1) / detail::kPanel;
        b.panels.assign(static_cast<std::size_t>(b.n_panels * q * detail::kPanel), 0.0);
        for (Index r = 0; r < b.n_panels * detail::kPanel; ++r) {
            if (nb == 0) break;
            const Index src = b.ids[static_cast<std::size_t>(std::min(r, nb - 1))];
            const Index pb = r / detail::kPanel;
            const Index t = r % detail::kPanel;
            for (Index d = 0; d < q; ++d) {
                b.panels[static_cast<std::size_t>((pb * q + d) * detail::kPanel + t)] =
                    features(src, dims[static_cast<std::size_t>(d)]);
            }
        }
    }
    const auto smallest = static_cast<Index>(std::min(blocks[0].ids.size(), blocks[1].ids.size()));
    if (k > smallest) {
        throw DataError("knn_match: k = " + std::to_string(k) + " exceeds the smaller arm of the pool (" +
                        std::to_string(smallest) + ")");
    }

    std::vector<MatchedGroup> out(queries.size());
    const auto nq = queries.size();
    const auto n_threads = static_cast<std::size_t>(std::clamp<int>(jobs, 1, 256));
    if (n_threads == 1 || nq < 64) {
        detail::match_range(features, dims, w_active, blocks, queries, k, w.kind(), 0, nq, out);
    } else {
        std::vector<std::jthread> workers;
        const std::size_t chunk = (nq + n_threads - 1) / n_threads;
        for (std::size_t t = 0; t < n_threads; ++t) {
            const std::size_t b = t * chunk;
            const std::size_t e = std::min(nq, b + chunk);
            if (b >= e) break;
            workers.emplace_back([&, b, e] {
                detail::match_range(features, dims, w_active, blocks, queries, k, w.kind(), b, e, out);
            });
        }
    }
    return out;
}

/// Matches every estimation-set subject within the estimation set.
inline std::vector<MatchedGroup> knn_match(const Cohort& cohort, const Split& split, const WeightMatrix& w,
                                           Index k, int jobs = 1) {
    return knn_match(cohort.x(), cohort.z(), split.est_idx, split.est_idx, w, k, jobs);
}

/// Keeps the first k neighbours of each arm; exact because lists are sorted.
inline std::vector<MatchedGroup> truncate_groups(const std::vector<MatchedGroup>& groups, Index k,
                                                 const Eigen::MatrixXd& features, const WeightMatrix& w) {
    std::vector<MatchedGroup> out = groups;
    for (auto& g : out) {
        if (static_cast<Index>(g.m1.size()) < k || static_cast<Index>(g.m0.size()) < k) {
            throw DataError("truncate_groups: groups hold fewer than k neighbours");
        }
        g.m1.resize(static_cast<std::size_t>(k));
        g.m0.resize(static_cast<std::size_t>(k));
        g.d1_max = std::sqrt(wdist2(features.row(g.query_idx).transpose(), features.row(g.m1.back()).transpose(), w.weights()));
        g.d0_max = std::sqrt(wdist2(features.row(g.query_idx).transpose(), features.row(g.m0.back()).transpose(), w.weights()));
    }
    return out;
}

/// Debug dump: query_idx, arm, rank, neighbor_idx, distance.
inline void write_matches(const std::vector<MatchedGroup>& groups, const Eigen::MatrixXd& features,
                          const WeightMatrix& w, const std::string& path) {
    csv::write_file(path, [&](std::ostream& out) {
        csv::write_row(out, {"query_idx", "arm", "rank", "neighbor_idx", "distance"});
        for (const auto& g : groups) {
            for (int arm : {1, 0}) {
                const IndexList& m = arm == 1 ? g.m1 : g.m0;
                for (std::size_t r = 0; r < m.size(); ++r) {
                    const double d = std::sqrt(wdist2(features.row(g.query_idx).transpose(),
                                                      features.row(m[r]).transpose(), w.weights()));
                    csv::write_row(out, {std::to_string(g.query_idx), std::to_string(arm), std::to_string(r + 1),
                                         std::to_string(m[r]), csv::format_double(d)});
                }
            }
        }
    });
}

}  // namespace curematch
