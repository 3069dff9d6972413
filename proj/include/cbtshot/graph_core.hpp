#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "cbtshot/errors.hpp"

namespace cbtshot {

using Matrix = Eigen::MatrixXd;
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Ingestion tolerance: anything less symmetric than this is a data error,
// not numerical noise.
inline constexpr double kAsymmetryTolerance = 1e-9;

// Weighted brain graph for one subject at one timepoint. Invariants held
// by construction: square, symmetric, zero diagonal, finite nonnegative
// entries. Instances are immutable and safe to share across threads.
class ConnectivityMatrix {
public:
  // Validates a raw square matrix. Small asymmetries (<= 1e-9) are
  // averaged away, the diagonal is forced to zero; anything worse throws.
  static ConnectivityMatrix validate(const Matrix& raw);

  const Matrix& weights() const { return weights_; }
  int num_rois() const { return static_cast<int>(weights_.rows()); }

  double operator()(int i, int j) const { return weights_(i, j); }

  bool operator==(const ConnectivityMatrix& other) const {
    return weights_ == other.weights_;
  }

private:
  explicit ConnectivityMatrix(Matrix w) : weights_(std::move(w)) {}
  Matrix weights_;
};

// Labeled set of same-size connectivity matrices.
class Population {
public:
  explicit Population(std::vector<ConnectivityMatrix> members,
                      std::vector<std::string> labels = {});

  const std::vector<ConnectivityMatrix>& members() const { return members_; }
  const std::vector<std::string>& labels() const { return labels_; }
  bool labeled() const { return !labels_.empty(); }
  std::size_t size() const { return members_.size(); }
  int num_rois() const { return members_.front().num_rois(); }

  const ConnectivityMatrix& operator[](std::size_t i) const { return members_[i]; }

  // Distinct labels in sorted order.
  std::vector<std::string> classes() const;

private:
  std::vector<ConnectivityMatrix> members_;
  std::vector<std::string> labels_;
};

// Ordered states of one subject: baseline plus T follow-ups.
class Trajectory {
public:
  Trajectory(std::vector<ConnectivityMatrix> states, std::string subject_id);

  const std::vector<ConnectivityMatrix>& states() const { return states_; }
  const std::string& subject_id() const { return subject_id_; }
  const ConnectivityMatrix& baseline() const { return states_.front(); }
  // Number of follow-up timepoints (length - 1).
  int num_followups() const { return static_cast<int>(states_.size()) - 1; }
  int num_rois() const { return states_.front().num_rois(); }

private:
  std::vector<ConnectivityMatrix> states_;
  std::string subject_id_;
};

// Symmetric zero-diagonal edge mask.
class AdjacencyMask {
public:
  explicit AdjacencyMask(BoolMatrix mask);

  const BoolMatrix& mask() const { return mask_; }
  int num_rois() const { return static_cast<int>(mask_.rows()); }
  bool operator()(int i, int j) const { return mask_(i, j); }

private:
  BoolMatrix mask_;
};

// ---- operations (pure functions) ----

// Frobenius distance ||a - b||_F.
double frobenius_distance(const ConnectivityMatrix& a, const ConnectivityMatrix& b);

// Mean absolute edge error over the strict upper triangle. The diagonal is
// excluded and the lower triangle is redundant by symmetry.
double mean_absolute_error(const ConnectivityMatrix& a, const ConnectivityMatrix& b);

// Keeps edges strictly above the mean of the strict-upper-triangle weights.
AdjacencyMask threshold_by_mean(const ConnectivityMatrix& a);

// result[i][j] = a[perm[i]][perm[j]]. perm must be a bijection on 0..r-1.
ConnectivityMatrix permute_nodes(const ConnectivityMatrix& a, const std::vector<int>& perm);

AdjacencyMask permute_mask(const AdjacencyMask& m, const std::vector<int>& perm);

// FNV-1a over the exact bit patterns of the weights, for dataset hashes.
std::uint64_t matrix_content_hash(const Matrix& m);

}  // namespace cbtshot
