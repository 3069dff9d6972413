#include "cbtshot/graph_core.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

namespace cbtshot {

ConnectivityMatrix ConnectivityMatrix::validate(const Matrix& raw) {
  if (raw.rows() != raw.cols()) {
    throw NonSquare("matrix is " + std::to_string(raw.rows()) + "x" +
                    std::to_string(raw.cols()) + ", expected square");
  }
  const auto r = raw.rows();
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < r; ++j) {
      const double v = raw(i, j);
      if (!std::isfinite(v)) {
        throw NonFiniteEntry("non-finite entry at (" + std::to_string(i) + "," +
                             std::to_string(j) + ")");
      }
      if (i != j && v < 0.0) {
        throw NegativeEntry("negative entry " + std::to_string(v) + " at (" +
                            std::to_string(i) + "," + std::to_string(j) + ")");
      }
    }
  }
  double max_asym = 0.0;
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = i + 1; j < r; ++j) {
      max_asym = std::max(max_asym, std::abs(raw(i, j) - raw(j, i)));
    }
  }
  if (max_asym > kAsymmetryTolerance) {
    throw AsymmetryTooLarge("max asymmetry " + std::to_string(max_asym) +
                            " exceeds tolerance 1e-9");
  }
  Matrix w = 0.5 * (raw + raw.transpose());
  w.diagonal().setZero();
  return ConnectivityMatrix(std::move(w));
}

Population::Population(std::vector<ConnectivityMatrix> members,
                       std::vector<std::string> labels)
    : members_(std::move(members)), labels_(std::move(labels)) {
  if (members_.empty()) throw EmptyPopulation("population has no members");
  const int r = members_.front().num_rois();
  for (const auto& m : members_) {
    if (m.num_rois() != r) {
      throw DimensionMismatch("population mixes r=" + std::to_string(r) +
                              " and r=" + std::to_string(m.num_rois()));
    }
  }
  if (!labels_.empty() && labels_.size() != members_.size()) {
    throw DimensionMismatch("label count does not match member count");
  }
}

std::vector<std::string> Population::classes() const {
  std::set<std::string> uniq(labels_.begin(), labels_.end());
  return {uniq.begin(), uniq.end()};
}

Trajectory::Trajectory(std::vector<ConnectivityMatrix> states, std::string subject_id)
    : states_(std::move(states)), subject_id_(std::move(subject_id)) {
  if (states_.size() < 2) {
    throw InconsistentTrajectoryLength("trajectory '" + subject_id_ +
                                       "' needs a baseline and at least one follow-up");
  }
  const int r = states_.front().num_rois();
  for (const auto& s : states_) {
    if (s.num_rois() != r) {
      throw DimensionMismatch("trajectory '" + subject_id_ + "' mixes matrix sizes");
    }
  }
}

AdjacencyMask::AdjacencyMask(BoolMatrix mask) : mask_(std::move(mask)) {
  if (mask_.rows() != mask_.cols()) throw NonSquare("mask must be square");
  for (Eigen::Index i = 0; i < mask_.rows(); ++i) {
    if (mask_(i, i)) throw Error("mask diagonal must be false");
    for (Eigen::Index j = i + 1; j < mask_.cols(); ++j) {
      if (mask_(i, j) != mask_(j, i)) throw Error("mask must be symmetric");
    }
  }
}

namespace {
void require_same_r(const ConnectivityMatrix& a, const ConnectivityMatrix& b) {
  if (a.num_rois() != b.num_rois()) {
    throw DimensionMismatch("r=" + std::to_string(a.num_rois()) + " vs r=" +
                            std::to_string(b.num_rois()));
  }
}
}  // namespace

double frobenius_distance(const ConnectivityMatrix& a, const ConnectivityMatrix& b) {
  require_same_r(a, b);
  return (a.weights() - b.weights()).norm();
}

double mean_absolute_error(const ConnectivityMatrix& a, const ConnectivityMatrix& b) {
  require_same_r(a, b);
  const int r = a.num_rois();
  if (r < 2) return 0.0;
  double sum = 0.0;
  for (int i = 0; i < r; ++i) {
    for (int j = i + 1; j < r; ++j) {
      sum += std::abs(a(i, j) - b(i, j));
    }
  }
  return sum / (0.5 * r * (r - 1));
}

AdjacencyMask threshold_by_mean(const ConnectivityMatrix& a) {
  const int r = a.num_rois();
  double mean = 0.0;
  if (r >= 2) {
    double sum = 0.0;
    for (int i = 0; i < r; ++i) {
      for (int j = i + 1; j < r; ++j) sum += a(i, j);
    }
    mean = sum / (0.5 * r * (r - 1));
  }
  BoolMatrix mask(r, r);
  mask.setConstant(false);
  for (int i = 0; i < r; ++i) {
    for (int j = i + 1; j < r; ++j) {
      const bool keep = a(i, j) > mean;
      mask(i, j) = keep;
      mask(j, i) = keep;
    }
  }
  return AdjacencyMask(std::move(mask));
}

namespace {
void require_permutation(const std::vector<int>& perm, int r) {
  if (static_cast<int>(perm.size()) != r) {
    throw InvalidPermutation("permutation length " + std::to_string(perm.size()) +
                             " does not match r=" + std::to_string(r));
  }
  std::vector<bool> seen(r, false);
  for (int p : perm) {
    if (p < 0 || p >= r || seen[p]) {
      throw InvalidPermutation("not a bijection on 0.." + std::to_string(r - 1));
    }
    seen[p] = true;
  }
}
}  // namespace

ConnectivityMatrix permute_nodes(const ConnectivityMatrix& a, const std::vector<int>& perm) {
  const int r = a.num_rois();
  require_permutation(perm, r);
  Matrix out(r, r);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < r; ++j) out(i, j) = a(perm[i], perm[j]);
  }
  return ConnectivityMatrix::validate(out);
}

AdjacencyMask permute_mask(const AdjacencyMask& m, const std::vector<int>& perm) {
  const int r = m.num_rois();
  require_permutation(perm, r);
  BoolMatrix out(r, r);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < r; ++j) out(i, j) = m(perm[i], perm[j]);
  }
  return AdjacencyMask(std::move(out));
}

std::uint64_t matrix_content_hash(const Matrix& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t bits) {
    for (int k = 0; k < 8; ++k) {
      h ^= (bits >> (8 * k)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  mix(static_cast<std::uint64_t>(m.rows()));
  mix(static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::uint64_t bits;
      const double v = m(i, j);
      std::memcpy(&bits, &v, sizeof(bits));
      mix(bits);
    }
  }
  return h;
}

}  // namespace cbtshot
