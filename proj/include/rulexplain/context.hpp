#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "rulexplain/error.hpp"
#include "rulexplain/learner.hpp"
#include "rulexplain/optimizers.hpp"

namespace rulexplain {

using Matrix = std::vector<std::vector<double>>;
using Point2 = std::array<double, 2>;

/// One row per archive member: its changepoints, component-major.
inline Matrix flatten(const Archive& archive) {
    Matrix m;
    m.reserve(archive.size());
    for (const auto& c : archive.members()) m.push_back(flatten(c.input));
    return m;
}

enum class ReductionMethod { Pca, IdentityFirstTwo, Plugin };

using Reducer = std::function<std::vector<Point2>(const Matrix&)>;

/// Mean-centred projection onto the top two right singular directions. Each
/// direction is signed so that its largest-magnitude loading is positive.
inline std::vector<Point2> pca_2d(const Matrix& rows) {
    if (rows.size() < 2) throw PreconditionError("2-D reduction needs at least 2 rows");
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto d = static_cast<Eigen::Index>(rows.front().size());
    Eigen::MatrixXd X(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != d)
            throw SchemaError("ragged matrix passed to reduction");
        for (Eigen::Index k = 0; k < d; ++k) X(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    }
    X.rowwise() -= X.colwise().mean();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double scale = std::max(1.0, X.cwiseAbs().maxCoeff());
    if (sv.size() == 0 || sv(0) <= 1e-12 * scale) throw PreconditionError("rank-0 matrix: all rows identical");

    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(d, 2);
    for (Eigen::Index c = 0; c < std::min<Eigen::Index>(2, sv.size()); ++c) {
        if (sv(c) <= 1e-12 * scale) continue;  // rank-1 data: second axis stays zero
        Eigen::VectorXd v = svd.matrixV().col(c);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        V.col(c) = v;
    }
    const Eigen::MatrixXd P = X * V;
    std::vector<Point2> out(rows.size());
    for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = {P(i, 0), P(i, 1)};
    return out;
}

inline std::vector<Point2> reduce_2d(const Matrix& rows, ReductionMethod method = ReductionMethod::Pca,
                                     const Reducer& plugin = {}) {
    if (rows.size() < 2) throw PreconditionError("2-D reduction needs at least 2 rows");
    switch (method) {
        case ReductionMethod::Pca: return pca_2d(rows);
        case ReductionMethod::IdentityFirstTwo: {
            std::vector<Point2> out;
            for (const auto& r : rows) out.push_back({r.empty() ? 0.0 : r[0], r.size() > 1 ? r[1] : 0.0});
            return out;
        }
        case ReductionMethod::Plugin:
            if (!plugin) throw PreconditionError("plugin reduction selected without a reducer");
            {
                auto out = plugin(rows);
                if (out.size() != rows.size()) throw SchemaError("plugin reducer changed the row count");
                return out;
            }
    }
    return {};
}

struct KMeansResult {
    std::vector<int> assignments;
    std::vector<Point2> centroids;
    std::vector<double> inertia_history;  // one entry per Lloyd assignment step
    int iterations = 0;

    double inertia() const { return inertia_history.empty() ? 0.0 : inertia_history.back(); }
};

namespace detail {

inline double sq_dist(const Point2& a, const Point2& b) {
    const double dx = a[0] - b[0], dy = a[1] - b[1];
    return dx * dx + dy * dy;
}

}  // namespace detail

/// Lloyd iterations from k-means++ seeding. Empty clusters keep their
/// previous centroid and are left for the caller to drop.
inline KMeansResult kmeans(const std::vector<Point2>& pts, int k, std::uint64_t seed, int max_iter = 200) {
    if (k < 1) throw PreconditionError("K must be at least 1");
    if (static_cast<std::size_t>(k) > pts.size()) throw PreconditionError("K exceeds the number of points");
    std::mt19937_64 rng(seed);
    const std::size_t n = pts.size();

    KMeansResult res;
    std::vector<bool> chosen(n, false);
    std::size_t first = static_cast<std::size_t>(rng() % n);
    res.centroids.push_back(pts[first]);
    chosen[first] = true;
    std::vector<double> d2(n);
    while (res.centroids.size() < static_cast<std::size_t>(k)) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : res.centroids) best = std::min(best, detail::sq_dist(pts[i], c));
            d2[i] = chosen[i] ? 0.0 : best;
            total += d2[i];
        }
        std::size_t pick = n;
        if (total > 0.0) {
            double r = detail::uniform01(rng) * total;
            for (std::size_t i = 0; i < n; ++i) {
                if (d2[i] <= 0.0) continue;
                pick = i;
                if (r < d2[i]) break;
                r -= d2[i];
            }
        } else {
            // All remaining points coincide with a centre already chosen.
            for (std::size_t i = 0; i < n && pick == n; ++i)
                if (!chosen[i]) pick = i;
        }
        chosen[pick] = true;
        res.centroids.push_back(pts[pick]);
    }

    res.assignments.assign(n, -1);
    for (int it = 0; it < max_iter; ++it) {
        bool changed = false;
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double bd = detail::sq_dist(pts[i], res.centroids[0]);
            for (int c = 1; c < k; ++c) {
                const double dd = detail::sq_dist(pts[i], res.centroids[static_cast<std::size_t>(c)]);
                if (dd < bd) {
                    bd = dd;
                    best = c;
                }
            }
            changed = changed || res.assignments[i] != best;
            res.assignments[i] = best;
            inertia += bd;
        }
        res.inertia_history.push_back(inertia);
        res.iterations = it + 1;
        if (!changed && it > 0) break;
        std::vector<Point2> sum(static_cast<std::size_t>(k), {0.0, 0.0});
        std::vector<int> count(static_cast<std::size_t>(k), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = static_cast<std::size_t>(res.assignments[i]);
            sum[c][0] += pts[i][0];
            sum[c][1] += pts[i][1];
            ++count[c];
        }
        for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c)
            if (count[c] > 0) res.centroids[c] = {sum[c][0] / count[c], sum[c][1] / count[c]};
    }
    return res;
}

/// Representative input-output pairs handed to the rule synthesizer.
struct ClusterContext {
    std::vector<std::size_t> medoid_indices;  // into the archive
    std::vector<Candidate> medoids;
    OutputSeries baseline;
    std::vector<Point2> embedding;
    std::vector<int> assignments;
    std::vector<Point2> centroids;
    int k = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;

    std::size_t size() const { return medoids.size(); }
};

/// Per cluster, the archive member nearest the centroid in the embedding.
/// Ties go to the lower fit loss, then the lower archive index.
inline ClusterContext select_medoids(const Archive& archive, const std::vector<Point2>& embedding,
                                     const KMeansResult& km) {
    if (embedding.size() != archive.size() || km.assignments.size() != archive.size())
        throw SchemaError("embedding/assignments do not match the archive");
    ClusterContext ctx;
    ctx.baseline = archive.baseline();
    ctx.embedding = embedding;
    ctx.assignments = km.assignments;
    ctx.centroids = km.centroids;
    ctx.k = static_cast<int>(km.centroids.size());
    for (std::size_t c = 0; c < km.centroids.size(); ++c) {
        std::size_t best = archive.size();
        double bd = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < archive.size(); ++i) {
            if (km.assignments[i] != static_cast<int>(c)) continue;
            const double d = detail::sq_dist(embedding[i], km.centroids[c]);
            const bool better = best == archive.size() || d < bd || (d == bd && archive[i].l_out < archive[best].l_out);
            if (better) {
                best = i;
                bd = d;
            }
        }
        if (best == archive.size()) {
            ctx.warnings.push_back("cluster " + std::to_string(c) + " is empty and was dropped");
            continue;
        }
        ctx.medoid_indices.push_back(best);
        ctx.medoids.push_back(archive[best]);
    }
    return ctx;
}

struct ContextOptions {
    int k = 4;
    std::uint64_t seed = 0;
    ReductionMethod method = ReductionMethod::Pca;
    Reducer plugin;
    int max_iter = 200;
};

/// flatten -> reduce_2d -> kmeans -> select_medoids. K is capped at |archive|.
inline ClusterContext build_context(const Archive& archive, const ContextOptions& opt = {}) {
    if (archive.empty()) throw PreconditionError("cannot build a context from an empty archive");
    if (archive.size() == 1) {
        ClusterContext ctx;
        ctx.baseline = archive.baseline();
        ctx.embedding = {{0.0, 0.0}};
        ctx.assignments = {0};
        ctx.centroids = {{0.0, 0.0}};
        ctx.k = 1;
        ctx.seed = opt.seed;
        ctx.medoid_indices = {0};
        ctx.medoids = {archive[0]};
        return ctx;
    }
    const int k = std::min<int>(opt.k, static_cast<int>(archive.size()));
    const auto emb = reduce_2d(flatten(archive), opt.method, opt.plugin);
    const auto km = kmeans(emb, k, opt.seed, opt.max_iter);
    auto ctx = select_medoids(archive, emb, km);
    ctx.seed = opt.seed;
    return ctx;
}

}  // namespace rulexplain
