#include "cbtshot/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <thread>

#include "cbtshot/rng.hpp"

namespace cbtshot {

std::string strategy_name(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::TrainOnAll: return "train-on-all";
    case StrategyKind::RandomOneShot: return "random-one-shot";
    case StrategyKind::LinearAverageOneShot: return "linear-average-one-shot";
    case StrategyKind::CbtOneShot: return "cbt-one-shot";
  }
  return "unknown";
}

std::optional<StrategyKind> parse_strategy(const std::string& name) {
  if (name == "all" || name == "train-on-all") return StrategyKind::TrainOnAll;
  if (name == "random" || name == "random-one-shot") return StrategyKind::RandomOneShot;
  if (name == "avg" || name == "linear-average-one-shot") {
    return StrategyKind::LinearAverageOneShot;
  }
  if (name == "cbt" || name == "cbt-one-shot") return StrategyKind::CbtOneShot;
  return std::nullopt;
}

FoldSplit kfold_split(int n, const std::optional<std::vector<std::string>>& labels, int k,
                      std::uint64_t seed) {
  if (k < 2) throw InvalidSpec("kfold_split: k must be at least 2");
  if (n < k) {
    throw TooFewSamples("kfold_split: n=" + std::to_string(n) + " < k=" + std::to_string(k));
  }
  if (labels && static_cast<int>(labels->size()) != n) {
    throw DimensionMismatch("kfold_split: label count mismatch");
  }
  auto rng = make_rng(derive_seed(seed, "kfold"));
  std::vector<std::vector<int>> fold_members(k);

  if (labels) {
    // Per class: spread members as evenly as possible, handing remainder
    // slots to the currently lightest folds. Keeps overall fold sizes
    // within one of each other and every class near-evenly covered.
    std::map<std::string, std::vector<int>> by_class;
    for (int i = 0; i < n; ++i) (*by_class.emplace((*labels)[i], std::vector<int>{}).first).second.push_back(i);
    std::vector<std::pair<std::string, std::vector<int>>> groups(by_class.begin(), by_class.end());
    std::stable_sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) {
      return a.second.size() > b.second.size();
    });
    for (auto& [label, members] : groups) {
      std::shuffle(members.begin(), members.end(), rng);
      const int base = static_cast<int>(members.size()) / k;
      const int rem = static_cast<int>(members.size()) % k;
      std::vector<int> order(k);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return fold_members[a].size() < fold_members[b].size();
      });
      std::size_t next = 0;
      for (int rank = 0; rank < k; ++rank) {
        const int fold = order[rank];
        const int take = base + (rank < rem ? 1 : 0);
        for (int t = 0; t < take; ++t) fold_members[fold].push_back(members[next++]);
      }
    }
  } else {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t next = 0;
    for (int f = 0; f < k; ++f) {
      const int take = n / k + (f < n % k ? 1 : 0);
      for (int t = 0; t < take; ++t) fold_members[f].push_back(order[next++]);
    }
  }

  FoldSplit split;
  split.k = k;
  split.seed = seed;
  split.test_indices = fold_members;
  split.train_indices.resize(k);
  for (int f = 0; f < k; ++f) {
    std::sort(split.test_indices[f].begin(), split.test_indices[f].end());
    for (int g = 0; g < k; ++g) {
      if (g == f) continue;
      split.train_indices[f].insert(split.train_indices[f].end(), fold_members[g].begin(),
                                    fold_members[g].end());
    }
    std::sort(split.train_indices[f].begin(), split.train_indices[f].end());
  }
  return split;
}

ClassificationMetrics classification_metrics(const std::vector<std::string>& predictions,
                                             const std::vector<double>& positive_scores,
                                             const std::vector<std::string>& labels,
                                             const std::string& positive_class) {
  const std::size_t n = labels.size();
  if (predictions.size() != n || positive_scores.size() != n) {
    throw DimensionMismatch("classification_metrics: misaligned inputs");
  }
  if (n == 0) throw EmptyBatch("classification_metrics: no samples");

  int tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool truth_pos = labels[i] == positive_class;
    const bool pred_pos = predictions[i] == positive_class;
    if (truth_pos && pred_pos) ++tp;
    else if (truth_pos) ++fn;
    else if (pred_pos) ++fp;
    else ++tn;
  }
  ClassificationMetrics m;
  m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(n);
  m.sensitivity = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  m.specificity = (tn + fp) > 0 ? static_cast<double>(tn) / (tn + fp) : 0.0;

  const std::size_t n_pos = static_cast<std::size_t>(tp + fn);
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    return m;  // AUC undefined on single-class labels
  }
  // Mann-Whitney rank statistic with midranks for ties.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return positive_scores[a] < positive_scores[b];
  });
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && positive_scores[order[j + 1]] == positive_scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based midrank
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = mid;
    i = j + 1;
  }
  double pos_rank_sum = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    if (labels[s] == positive_class) pos_rank_sum += rank[s];
  }
  const double np = static_cast<double>(n_pos);
  m.auc = (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
  return m;
}

void SynthSpec::validate() const {
  if (num_subjects < 1) throw InvalidSpec("num_subjects must be positive");
  if (num_rois < 2) throw InvalidSpec("num_rois must be at least 2");
  if (class_separation < 0.0) throw InvalidSpec("class_separation must be nonnegative");
  if (noise_std < 0.0) throw InvalidSpec("noise_std must be nonnegative");
  if (timepoints < 2) throw InvalidSpec("timepoints must be at least 2");
}

namespace {

Matrix attribute_metric(int r, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> attr(r);
  for (auto& a : attr) a = unit(rng);
  Matrix m = Matrix::Zero(r, r);
  for (int i = 0; i < r; ++i) {
    for (int j = i + 1; j < r; ++j) {
      m(i, j) = std::abs(attr[i] - attr[j]);
      m(j, i) = m(i, j);
    }
  }
  return m;
}

Matrix symmetric_noise(int r, double std_dev, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, std_dev);
  Matrix m = Matrix::Zero(r, r);
  if (std_dev <= 0.0) return m;
  for (int i = 0; i < r; ++i) {
    for (int j = i + 1; j < r; ++j) {
      m(i, j) = gauss(rng);
      m(j, i) = m(i, j);
    }
  }
  return m;
}

ConnectivityMatrix clamped_member(const Matrix& mean, const Matrix& noise) {
  Matrix w = (mean + noise).cwiseMax(0.0).cwiseMin(1.0);
  w.diagonal().setZero();
  return ConnectivityMatrix::validate(w);
}

// Base graph in a [0.25, 0.75] band so member noise rarely hits the clamp.
Matrix synth_base(int r, std::mt19937_64& rng) {
  return (attribute_metric(r, rng) * 0.5).array() + 0.25;
}

}  // namespace

Population synth_population(const SynthSpec& spec) {
  spec.validate();
  auto rng = make_rng(derive_seed(spec.seed, "synth_population"));
  const int r = spec.num_rois;
  Matrix base = synth_base(r, rng);
  Matrix direction = attribute_metric(r, rng) * 0.5;
  Matrix mean_b = (base + spec.class_separation * direction).cwiseMax(0.0).cwiseMin(1.0);

  std::vector<ConnectivityMatrix> members;
  std::vector<std::string> labels;
  members.reserve(spec.num_subjects);
  labels.reserve(spec.num_subjects);
  for (int s = 0; s < spec.num_subjects; ++s) {
    const bool class_b = s % 2 == 1;
    const Matrix& mean = class_b ? mean_b : base;
    members.push_back(clamped_member(mean, symmetric_noise(r, spec.noise_std, rng)));
    labels.push_back(class_b ? kSynthClassB : kSynthClassA);
  }
  return Population(std::move(members), std::move(labels));
}

std::vector<Trajectory> synth_trajectories(const SynthSpec& spec) {
  spec.validate();
  auto rng = make_rng(derive_seed(spec.seed, "synth_trajectories"));
  const int r = spec.num_rois;
  Matrix base = synth_base(r, rng);
  Matrix drift = attribute_metric(r, rng) * spec.drift_magnitude;

  std::vector<Trajectory> out;
  out.reserve(spec.num_subjects);
  for (int s = 0; s < spec.num_subjects; ++s) {
    // per-subject deviation persists across visits; per-visit jitter is
    // smaller so consecutive states stay coherent
    Matrix subject_dev = symmetric_noise(r, spec.noise_std, rng);
    std::vector<ConnectivityMatrix> states;
    states.reserve(spec.timepoints);
    for (int t = 0; t < spec.timepoints; ++t) {
      Matrix visit_noise = symmetric_noise(r, 0.5 * spec.noise_std, rng);
      states.push_back(clamped_member(base + t * drift, subject_dev + visit_noise));
    }
    out.emplace_back(std::move(states), "synth" + std::to_string(s));
  }
  return out;
}

void TemplateAuditLog::record(int fold, const std::string& strategy, std::vector<int> indices) {
  std::lock_guard<std::mutex> lock(mutex_);
  events_.push_back(Event{fold, strategy, std::move(indices)});
}

std::vector<TemplateAuditLog::Event> TemplateAuditLog::events() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return events_;
}

namespace {

void run_jobs(int njobs, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, njobs));
  if (threads == 1) {
    for (int j = 0; j < njobs; ++j) fn(j);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const int j = next.fetch_add(1);
        if (j >= njobs) return;
        try {
          fn(j);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::uint64_t job_seed(std::uint64_t base, const std::string& tag) {
  return derive_seed(base, tag);
}

struct JobIndex {
  int strategy;
  int fold;
  int repeat;
};

std::vector<JobIndex> enumerate_jobs(const std::vector<StrategySpec>& strategies, int k) {
  std::vector<JobIndex> jobs;
  for (int s = 0; s < static_cast<int>(strategies.size()); ++s) {
    const int repeats = std::max(1, strategies[s].repeats);
    for (int f = 0; f < k; ++f) {
      for (int rep = 0; rep < repeats; ++rep) jobs.push_back(JobIndex{s, f, rep});
    }
  }
  return jobs;
}

double mean_of(const std::vector<double>& xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double stddev_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

}  // namespace

std::vector<std::vector<std::vector<double>>> RegressionReport::per_fold() const {
  std::vector<std::vector<std::vector<double>>> out(
      strategies.size(),
      std::vector<std::vector<double>>(num_folds, std::vector<double>(num_followups, 0.0)));
  std::vector<std::vector<int>> counts(strategies.size(), std::vector<int>(num_folds, 0));
  for (const auto& c : cells) {
    for (int t = 0; t < num_followups; ++t) out[c.strategy][c.fold][t] += c.mae_per_followup[t];
    ++counts[c.strategy][c.fold];
  }
  for (std::size_t s = 0; s < strategies.size(); ++s) {
    for (int f = 0; f < num_folds; ++f) {
      if (counts[s][f] == 0) continue;
      for (int t = 0; t < num_followups; ++t) out[s][f][t] /= counts[s][f];
    }
  }
  return out;
}

std::vector<std::vector<double>> RegressionReport::mean() const {
  const auto folds = per_fold();
  std::vector<std::vector<double>> out(strategies.size(), std::vector<double>(num_followups));
  for (std::size_t s = 0; s < strategies.size(); ++s) {
    for (int t = 0; t < num_followups; ++t) {
      std::vector<double> vals;
      for (int f = 0; f < num_folds; ++f) vals.push_back(folds[s][f][t]);
      out[s][t] = mean_of(vals);
    }
  }
  return out;
}

std::vector<std::vector<double>> RegressionReport::stddev() const {
  const auto folds = per_fold();
  std::vector<std::vector<double>> out(strategies.size(), std::vector<double>(num_followups));
  for (std::size_t s = 0; s < strategies.size(); ++s) {
    for (int t = 0; t < num_followups; ++t) {
      std::vector<double> vals;
      for (int f = 0; f < num_folds; ++f) vals.push_back(folds[s][f][t]);
      out[s][t] = stddev_of(vals);
    }
  }
  return out;
}

std::vector<ClassificationMetrics> ClassificationReport::mean() const {
  std::vector<ClassificationMetrics> out(strategies.size());
  for (std::size_t s = 0; s < strategies.size(); ++s) {
    std::vector<double> acc, sens, spec, auc;
    for (int f = 0; f < num_folds; ++f) {
      std::vector<double> a, se, sp, au;
      for (const auto& c : cells) {
        if (c.strategy != static_cast<int>(s) || c.fold != f) continue;
        a.push_back(c.metrics.accuracy);
        se.push_back(c.metrics.sensitivity);
        sp.push_back(c.metrics.specificity);
        if (c.metrics.auc) au.push_back(*c.metrics.auc);
      }
      if (a.empty()) continue;
      acc.push_back(mean_of(a));
      sens.push_back(mean_of(se));
      spec.push_back(mean_of(sp));
      if (!au.empty()) auc.push_back(mean_of(au));
    }
    out[s].accuracy = acc.empty() ? 0.0 : mean_of(acc);
    out[s].sensitivity = sens.empty() ? 0.0 : mean_of(sens);
    out[s].specificity = spec.empty() ? 0.0 : mean_of(spec);
    if (!auc.empty()) out[s].auc = mean_of(auc);
  }
  return out;
}

RegressionReport run_regression_benchmark(const std::vector<Trajectory>& trajectories,
                                          const std::vector<StrategySpec>& strategies,
                                          const EvolutionHyperparams& hp,
                                          const TemplateConfig& template_cfg,
                                          const FoldSplit& folds,
                                          const BenchmarkOptions& opts) {
  if (trajectories.empty()) throw EmptyTrainingSet("regression benchmark: no trajectories");
  if (strategies.empty()) throw InvalidSpec("regression benchmark: no strategies");
  const int followups = trajectories.front().num_followups();
  for (const auto& t : trajectories) {
    if (t.num_followups() != followups) {
      throw InconsistentTrajectoryLength("trajectory '" + t.subject_id() + "' length differs");
    }
  }

  RegressionReport report;
  report.strategies = strategies;
  report.num_followups = followups;
  report.num_folds = folds.k;
  const auto jobs = enumerate_jobs(strategies, folds.k);
  report.cells.resize(jobs.size());

  run_jobs(static_cast<int>(jobs.size()), opts.threads, [&](int j) {
    const JobIndex job = jobs[j];
    const StrategySpec strat = strategies[job.strategy];
    const auto& train_idx = folds.train_indices[job.fold];
    const auto& test_idx = folds.test_indices[job.fold];
    const std::string tag = "regression/" + strategy_name(strat.kind) + "/fold" +
                            std::to_string(job.fold) + "/rep" + std::to_string(job.repeat);

    std::vector<Trajectory> training;
    switch (strat.kind) {
      case StrategyKind::TrainOnAll: {
        for (int i : train_idx) training.push_back(trajectories[i]);
        break;
      }
      case StrategyKind::RandomOneShot: {
        auto rng = make_rng(job_seed(opts.seed, tag + "/draw"));
        std::uniform_int_distribution<std::size_t> dist(0, train_idx.size() - 1);
        training.push_back(trajectories[train_idx[dist(rng)]]);
        break;
      }
      case StrategyKind::LinearAverageOneShot:
      case StrategyKind::CbtOneShot: {
        // one template per timepoint, estimated from the training fold only
        std::vector<ConnectivityMatrix> states;
        for (int t = 0; t <= followups; ++t) {
          std::vector<ConnectivityMatrix> slice;
          for (int i : train_idx) slice.push_back(trajectories[i].states()[t]);
          Population pop(std::move(slice));
          if (opts.audit) opts.audit->record(job.fold, strategy_name(strat.kind), train_idx);
          if (strat.kind == StrategyKind::LinearAverageOneShot) {
            states.push_back(linear_average_template(pop));
          } else {
            TemplateConfig cfg = template_cfg;
            cfg.rng_seed = job_seed(opts.seed, tag + "/cbt/t" + std::to_string(t));
            states.push_back(estimate_cbt(pop, cfg));
          }
        }
        training.emplace_back(std::move(states), strategy_name(strat.kind));
        break;
      }
    }

    EvolutionHyperparams job_hp = hp;
    job_hp.rng_seed = job_seed(opts.seed, tag + "/cascade");
    CascadeModel model = train_cascade(training, job_hp);

    std::vector<double> mae(followups, 0.0);
    for (int i : test_idx) {
      const auto preds = predict_trajectory(model, trajectories[i].baseline());
      for (int t = 0; t < followups; ++t) {
        mae[t] += mean_absolute_error(preds[t], trajectories[i].states()[t + 1]);
      }
    }
    for (auto& v : mae) v /= static_cast<double>(test_idx.size());
    report.cells[j] = RegressionCell{job.strategy, job.fold, job.repeat, std::move(mae)};
  });
  return report;
}

ClassificationReport run_classification_benchmark(const Population& population,
                                                  const std::vector<StrategySpec>& strategies,
                                                  const ClassifierConfig& cfg,
                                                  const TemplateConfig& template_cfg,
                                                  const GatArchitecture& arch,
                                                  const std::string& positive_class,
                                                  const FoldSplit& folds,
                                                  const BenchmarkOptions& opts) {
  if (!population.labeled()) throw MissingClass("classification benchmark: unlabeled data");
  const auto classes = population.classes();
  if (classes.size() != 2) {
    throw MissingClass("classification benchmark: expected 2 classes, found " +
                       std::to_string(classes.size()));
  }
  if (positive_class != classes[0] && positive_class != classes[1]) {
    throw InvalidSpec("positive class '" + positive_class + "' not present in labels");
  }
  if (strategies.empty()) throw InvalidSpec("classification benchmark: no strategies");

  ClassificationReport report;
  report.strategies = strategies;
  report.positive_class = positive_class;
  report.num_folds = folds.k;
  const auto jobs = enumerate_jobs(strategies, folds.k);
  report.cells.resize(jobs.size());

  run_jobs(static_cast<int>(jobs.size()), opts.threads, [&](int j) {
    const JobIndex job = jobs[j];
    const StrategySpec strat = strategies[job.strategy];
    const auto& train_idx = folds.train_indices[job.fold];
    const auto& test_idx = folds.test_indices[job.fold];
    const std::string tag = "classification/" + strategy_name(strat.kind) + "/fold" +
                            std::to_string(job.fold) + "/rep" + std::to_string(job.repeat);

    std::vector<int> class_members[2];
    for (int i : train_idx) {
      class_members[population.labels()[i] == classes[1] ? 1 : 0].push_back(i);
    }
    if (class_members[0].empty() || class_members[1].empty()) {
      throw MissingClass("fold " + std::to_string(job.fold) +
                         " training data lacks a class");
    }

    std::vector<ConnectivityMatrix> members;
    std::vector<std::string> labels;
    switch (strat.kind) {
      case StrategyKind::TrainOnAll: {
        for (int i : train_idx) {
          members.push_back(population[i]);
          labels.push_back(population.labels()[i]);
        }
        break;
      }
      case StrategyKind::RandomOneShot: {
        auto rng = make_rng(job_seed(opts.seed, tag + "/draw"));
        for (int c = 0; c < 2; ++c) {
          std::uniform_int_distribution<std::size_t> dist(0, class_members[c].size() - 1);
          members.push_back(population[class_members[c][dist(rng)]]);
          labels.push_back(classes[c]);
        }
        break;
      }
      case StrategyKind::LinearAverageOneShot:
      case StrategyKind::CbtOneShot: {
        for (int c = 0; c < 2; ++c) {
          std::vector<ConnectivityMatrix> slice;
          for (int i : class_members[c]) slice.push_back(population[i]);
          Population class_pop(std::move(slice));
          if (opts.audit) opts.audit->record(job.fold, strategy_name(strat.kind), class_members[c]);
          if (strat.kind == StrategyKind::LinearAverageOneShot) {
            members.push_back(linear_average_template(class_pop));
          } else {
            TemplateConfig tcfg = template_cfg;
            tcfg.rng_seed = job_seed(opts.seed, tag + "/cbt/" + classes[c]);
            members.push_back(estimate_cbt(class_pop, tcfg));
          }
          labels.push_back(classes[c]);
        }
        break;
      }
    }

    ClassifierConfig job_cfg = cfg;
    job_cfg.rng_seed = job_seed(opts.seed, tag + "/gat");
    GatModel model = train_classifier(Population(std::move(members), std::move(labels)),
                                      job_cfg, arch);

    const int pos_index = model.classes()[0] == positive_class ? 0 : 1;
    std::vector<std::string> predictions, truth;
    std::vector<double> scores;
    for (int i : test_idx) {
      const Classification result = classify(model, population[i]);
      predictions.push_back(result.label);
      scores.push_back(result.probabilities[pos_index]);
      truth.push_back(population.labels()[i]);
    }
    report.cells[j] = ClassificationCell{
        job.strategy, job.fold, job.repeat,
        classification_metrics(predictions, scores, truth, positive_class)};
  });
  return report;
}

}  // namespace cbtshot
