#include "acousticpose/eval/pca.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <Eigen/Eigenvalues>

#include "acousticpose/common/error.hpp"

namespace acousticpose::eval {

PcaResult pca(const Eigen::MatrixXd& samples, std::size_t k) {
    const auto n = samples.rows(), D = samples.cols();
    if (n < 2 || D < 1) throw DataError("pca needs at least two samples");
    PcaResult r;
    r.mean = samples.colwise().mean().transpose();
    const Eigen::MatrixXd X = samples.rowwise() - r.mean.transpose();
    r.total_variance = X.squaredNorm() / static_cast<double>(n);
    if (!(r.total_variance > 0.0)) throw DataError("pca input has zero variance");

    const auto kk = static_cast<Eigen::Index>(k);
    if (kk > std::min(n, D)) throw DataError("pca asked for more components than the data has");
    if (n < D) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(X * X.transpose());
        const Eigen::VectorXd lam = es.eigenvalues().reverse();
        const Eigen::MatrixXd U = es.eigenvectors().rowwise().reverse();
        r.eigenvalues = lam.cwiseMax(0.0) / static_cast<double>(n);
        r.components.resize(D, kk);
        r.scores.resize(n, kk);
        for (Eigen::Index c = 0; c < kk; ++c) {
            const double s = std::sqrt(std::max(lam(c), 0.0));
            if (s > 1e-12 * std::sqrt(X.squaredNorm())) {
                r.components.col(c) = X.transpose() * U.col(c) / s;
                r.scores.col(c) = U.col(c) * s;
            } else {
                r.components.col(c).setZero();
                r.scores.col(c).setZero();
            }
        }
    } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(X.transpose() * X / static_cast<double>(n));
        r.eigenvalues = es.eigenvalues().reverse().cwiseMax(0.0);
        r.components = es.eigenvectors().rowwise().reverse().leftCols(kk);
        r.scores = X * r.components;
    }
    return r;
}

double silhouette(const Eigen::MatrixXd& points, const std::vector<int>& labels) {
    const auto n = points.rows();
    if (static_cast<std::size_t>(n) != labels.size()) throw DimensionError("silhouette labels do not match points");
    std::map<int, std::size_t> sizes;
    for (int l : labels) ++sizes[l];
    if (sizes.size() < 2) throw DataError("silhouette needs at least two clusters");
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        std::map<int, double> sums;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i != j) sums[labels[j]] += (points.row(i) - points.row(j)).norm();
        }
        const int own = labels[i];
        if (sizes[own] == 1) continue;
        const double a = sums[own] / static_cast<double>(sizes[own] - 1);
        double b = INFINITY;
        for (const auto& [l, s] : sums) {
            if (l != own) b = std::min(b, s / static_cast<double>(sizes[l]));
        }
        const double m = std::max(a, b);
        total += m > 0.0 ? (b - a) / m : 0.0;
    }
    return total / static_cast<double>(n);
}

SeparabilityReport feature_pca(const Eigen::MatrixXd& features, const std::vector<int>& labels) {
    std::map<int, std::size_t> sizes;
    for (int l : labels) ++sizes[l];
    if (sizes.size() < 2) throw DataError("feature_pca needs at least two clusters");
    for (const auto& [l, s] : sizes) {
        if (s < 3) throw DataError("cluster " + std::to_string(l) + " has fewer than three samples");
    }
    const auto p = pca(features, 2);
    SeparabilityReport r;
    r.points = p.scores;
    r.labels = labels;
    r.silhouette = silhouette(r.points, labels);
    r.eigenvalues = p.eigenvalues;
    return r;
}

}  // namespace acousticpose::eval
