#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

namespace acousticpose::eval {

struct PcaResult {
    Eigen::MatrixXd scores;      // [n x k] projections of the centred samples
    Eigen::MatrixXd components;  // [D x k] orthonormal principal directions
    Eigen::VectorXd eigenvalues; // covariance eigenvalues (1/n normalisation), descending
    Eigen::VectorXd mean;        // [D]
    double total_variance = 0.0;
};

// Exact PCA of the rows of `samples`. Uses the n x n Gram matrix when n < D.
// Throws DataError when every sample is identical.
PcaResult pca(const Eigen::MatrixXd& samples, std::size_t k);

// Mean silhouette (Euclidean) of labelled points; singleton clusters score 0.
double silhouette(const Eigen::MatrixXd& points, const std::vector<int>& labels);

struct SeparabilityReport {
    Eigen::MatrixXd points;  // [n x 2]
    std::vector<int> labels;
    double silhouette = 0.0;
    Eigen::VectorXd eigenvalues;
};

// Rows of `features` are flattened windows. Needs >= 2 clusters with >= 3 samples each.
SeparabilityReport feature_pca(const Eigen::MatrixXd& features, const std::vector<int>& labels);

}  // namespace acousticpose::eval
