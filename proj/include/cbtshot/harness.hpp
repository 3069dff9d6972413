#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "cbtshot/classification.hpp"
#include "cbtshot/evolution.hpp"
#include "cbtshot/graph_core.hpp"
#include "cbtshot/templates.hpp"

namespace cbtshot {

enum class StrategyKind { TrainOnAll, RandomOneShot, LinearAverageOneShot, CbtOneShot };

std::string strategy_name(StrategyKind kind);
std::optional<StrategyKind> parse_strategy(const std::string& name);

struct StrategySpec {
  StrategyKind kind;
  int repeats;  // averaged draws; meaningful for RandomOneShot

  static StrategySpec of(StrategyKind kind) {
    return StrategySpec{kind, kind == StrategyKind::RandomOneShot ? 20 : 1};
  }
};

struct FoldSplit {
  int k = 5;
  std::vector<std::vector<int>> train_indices;
  std::vector<std::vector<int>> test_indices;
  std::uint64_t seed = 0;
};

// Shuffled k-fold partition; label-stratified when labels are provided.
// Fold sizes differ by at most one.
FoldSplit kfold_split(int n, const std::optional<std::vector<std::string>>& labels, int k,
                      std::uint64_t seed);

struct ClassificationMetrics {
  double accuracy = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  std::optional<double> auc;  // absent when labels hold a single class
};

// accuracy, TP/(TP+FN), TN/(TN+FP) and the rank-based (Mann-Whitney) AUC of
// positive-class scores, ties counting one half.
ClassificationMetrics classification_metrics(const std::vector<std::string>& predictions,
                                             const std::vector<double>& positive_scores,
                                             const std::vector<std::string>& labels,
                                             const std::string& positive_class);

struct SynthSpec {
  int num_subjects = 20;
  int num_rois = 8;
  double class_separation = 0.0;
  double noise_std = 0.05;
  double drift_magnitude = 0.05;
  int timepoints = 3;  // baseline plus follow-ups
  std::uint64_t seed = 0;

  void validate() const;
};

inline const char* kSynthClassA = "classA";
inline const char* kSynthClassB = "classB";

// Two-class population: morphological-style base graph (absolute attribute
// differences), class means shifted by `class_separation`, members jittered
// with symmetric Gaussian noise and clamped to [0,1].
Population synth_population(const SynthSpec& spec);

// One trajectory per subject: a shared symmetric drift applied per timestep
// plus per-visit noise, clamped to [0,1].
std::vector<Trajectory> synth_trajectories(const SynthSpec& spec);

// Records every member index handed to a template estimator, so tests can
// prove that fold-f templates never see fold-f test data.
class TemplateAuditLog {
public:
  struct Event {
    int fold;
    std::string strategy;
    std::vector<int> indices;
  };

  void record(int fold, const std::string& strategy, std::vector<int> indices);
  std::vector<Event> events() const;

private:
  mutable std::mutex mutex_;
  std::vector<Event> events_;
};

// One benchmark measurement. `repeat` indexes random-one-shot draws.
struct RegressionCell {
  int strategy;  // index into the strategy list
  int fold;
  int repeat;
  std::vector<double> mae_per_followup;
};

struct RegressionReport {
  std::vector<StrategySpec> strategies;
  int num_followups = 0;
  int num_folds = 0;
  std::vector<RegressionCell> cells;

  // Per-fold values with repeats averaged first: [strategy][fold][followup].
  std::vector<std::vector<std::vector<double>>> per_fold() const;
  // Across-fold mean and standard deviation: [strategy][followup].
  std::vector<std::vector<double>> mean() const;
  std::vector<std::vector<double>> stddev() const;
};

struct ClassificationCell {
  int strategy;
  int fold;
  int repeat;
  ClassificationMetrics metrics;
};

struct ClassificationReport {
  std::vector<StrategySpec> strategies;
  std::string positive_class;
  int num_folds = 0;
  std::vector<ClassificationCell> cells;

  // Across-fold averages (repeats averaged within fold): one record per
  // strategy, AUC absent if it was absent in every fold.
  std::vector<ClassificationMetrics> mean() const;
};

struct BenchmarkOptions {
  std::uint64_t seed = 0;
  int threads = 1;
  TemplateAuditLog* audit = nullptr;
};

// The trajectory-forecasting protocol: per fold and strategy, build the
// training input (every trajectory / one random trajectory per repeat /
// per-timepoint linear averages / per-timepoint learned templates, all from
// the training fold only), train a cascade, score MAE per follow-up on the
// test fold.
RegressionReport run_regression_benchmark(const std::vector<Trajectory>& trajectories,
                                          const std::vector<StrategySpec>& strategies,
                                          const EvolutionHyperparams& hp,
                                          const TemplateConfig& template_cfg,
                                          const FoldSplit& folds,
                                          const BenchmarkOptions& opts = {});

// The diagnostic protocol: identical GAT architecture across strategies;
// training input is the full training fold, one random member per class,
// the per-class linear averages, or the per-class learned templates.
ClassificationReport run_classification_benchmark(const Population& population,
                                                  const std::vector<StrategySpec>& strategies,
                                                  const ClassifierConfig& cfg,
                                                  const TemplateConfig& template_cfg,
                                                  const GatArchitecture& arch,
                                                  const std::string& positive_class,
                                                  const FoldSplit& folds,
                                                  const BenchmarkOptions& opts = {});

}  // namespace cbtshot
