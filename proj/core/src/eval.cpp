#include "dgd/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "dgd/rng.hpp"

namespace dgd {

Detector train_downstream(const LabeledDataset& distilled, const TrainConfig& cfg, SeededRng& rng) {
  if (distilled.empty()) throw InvalidArgument("train_downstream: distilled set is empty");
  return train_classifier(distilled, cfg, rng);
}

double evaluate(const ImageClassifier& clf, const LabeledDataset& test) { return accuracy(clf, test); }

SeededRng downstream_stream(std::uint64_t seed) { return SeededRng(derive_seed(seed, {0xe7a1})); }

ModeSummary summarize(const std::string& mode, std::span<const double> values) {
  ModeSummary s;
  s.mode = mode;
  s.runs = static_cast<int>(values.size());
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() >= 2) {
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return s;
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

namespace {

void check_inputs(const PipelineInputs& in) {
  if (!in.train || !in.test || !in.autoencoder || !in.generator || !in.detector)
    throw InvalidArgument("pipeline inputs are incomplete");
  in.distill.validate();
  in.downstream.validate();
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

RunRecord run_one(const PipelineInputs& in, SelectionMode mode, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  DistillConfig cfg = in.distill;
  cfg.mode = mode;
  cfg.seed = seed;
  const auto result = distill(*in.train, *in.autoencoder, *in.generator, *in.detector, cfg);
  SeededRng rng = downstream_stream(seed);
  const auto clf = train_downstream(result.dataset, in.downstream, rng);
  RunRecord r;
  r.mode = to_string(mode);
  r.seed = seed;
  r.accuracy = evaluate(clf, *in.test);
  r.fallback_count = result.report.fallback;
  r.refined_count = result.report.refined;
  r.initially_defective = result.report.initially_defective;
  r.seconds = seconds_since(start);
  return r;
}

RunRecord run_random(const PipelineInputs& in, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  SeededRng subset_rng(derive_seed(seed, {0x7a4d}));
  const auto subset = random_class_subset(*in.train, in.distill.ipc, subset_rng);
  SeededRng rng = downstream_stream(seed);
  const auto clf = train_downstream(subset, in.downstream, rng);
  RunRecord r;
  r.mode = "random";
  r.seed = seed;
  r.accuracy = evaluate(clf, *in.test);
  r.seconds = seconds_since(start);
  return r;
}

}  // namespace

EvalReport run_ablation(const PipelineInputs& inputs, std::span<const SelectionMode> modes,
                        std::span<const std::uint64_t> seeds, bool random_baseline) {
  check_inputs(inputs);
  if (modes.empty() || seeds.empty()) throw InvalidArgument("run_ablation: need at least one mode and one seed");

  struct Job {
    std::optional<SelectionMode> mode;  // empty = random baseline
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (auto m : modes)
    for (auto s : seeds) jobs.push_back({m, s});
  if (random_baseline)
    for (auto s : seeds) jobs.push_back({std::nullopt, s});

  std::vector<RunRecord> records(jobs.size());
  parallel_for(jobs.size(), inputs.threads, [&](std::size_t i) {
    records[i] = jobs[i].mode ? run_one(inputs, *jobs[i].mode, jobs[i].seed) : run_random(inputs, jobs[i].seed);
  });

  EvalReport report;
  report.runs = std::move(records);
  std::vector<std::string> names;
  for (auto m : modes) names.push_back(to_string(m));
  if (random_baseline) names.push_back("random");
  for (const auto& name : names) {
    std::vector<double> acc;
    for (const auto& r : report.runs)
      if (r.mode == name) acc.push_back(r.accuracy);
    report.summaries.push_back(summarize(name, acc));
  }
  report.config = {{"distill", inputs.distill.to_json()}, {"downstream", inputs.downstream.to_json()}};
  report.architecture_note =
      "downstream classifier reuses the detector MLP architecture (hidden widths in config.downstream.hidden)";
  return report;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json runs_json = nlohmann::json::array();
  for (const auto& r : runs)
    runs_json.push_back({{"mode", r.mode},
                         {"seed", r.seed},
                         {"accuracy", r.accuracy},
                         {"fallback_count", r.fallback_count},
                         {"refined_count", r.refined_count},
                         {"initially_defective", r.initially_defective}});
  nlohmann::json sums = nlohmann::json::array();
  for (const auto& s : summaries) {
    nlohmann::json e = {{"mode", s.mode}, {"mean", s.mean}, {"runs", s.runs}};
    e["stddev"] = s.stddev ? nlohmann::json(*s.stddev) : nlohmann::json(nullptr);
    sums.push_back(e);
  }
  return {{"runs", runs_json}, {"summaries", sums}, {"config", config}, {"architecture_note", architecture_note}};
}

nlohmann::json EvalReport::timings_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : runs) out.push_back({{"mode", r.mode}, {"seed", r.seed}, {"seconds", r.seconds}});
  return out;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport rep;
  try {
    for (const auto& r : j.at("runs")) {
      RunRecord rec;
      rec.mode = r.at("mode").get<std::string>();
      rec.seed = r.at("seed").get<std::uint64_t>();
      rec.accuracy = r.at("accuracy").get<double>();
      rec.fallback_count = r.at("fallback_count").get<int>();
      rec.refined_count = r.value("refined_count", 0);
      rec.initially_defective = r.value("initially_defective", 0);
      rep.runs.push_back(rec);
    }
    for (const auto& s : j.at("summaries")) {
      ModeSummary m;
      m.mode = s.at("mode").get<std::string>();
      m.mean = s.at("mean").get<double>();
      m.runs = s.at("runs").get<int>();
      if (!s.at("stddev").is_null()) m.stddev = s.at("stddev").get<double>();
      rep.summaries.push_back(m);
    }
    rep.config = j.value("config", nlohmann::json::object());
    rep.architecture_note = j.value("architecture_note", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("eval report: ") + e.what());
  }
  return rep;
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << "mode,seed,accuracy,fallback_count\n";
  out << std::setprecision(17);
  for (const auto& r : runs) out << r.mode << ',' << r.seed << ',' << r.accuracy << ',' << r.fallback_count << '\n';
  return out.str();
}

std::string EvalReport::summary_table() const {
  std::ostringstream out;
  out << std::left << std::setw(10) << "mode" << std::right << std::setw(6) << "runs" << std::setw(12) << "mean(%)"
      << std::setw(10) << "std(%)" << '\n';
  out << std::fixed << std::setprecision(2);
  for (const auto& s : summaries) {
    out << std::left << std::setw(10) << s.mode << std::right << std::setw(6) << s.runs << std::setw(12)
        << 100.0 * s.mean;
    if (s.stddev) out << std::setw(10) << 100.0 * *s.stddev;
    else out << std::setw(10) << "-";
    out << '\n';
  }
  return out.str();
}

const ModeSummary* EvalReport::summary(const std::string& mode) const {
  for (const auto& s : summaries)
    if (s.mode == mode) return &s;
  return nullptr;
}

std::optional<double> EvalReport::accuracy(const std::string& mode, std::uint64_t seed) const {
  for (const auto& r : runs)
    if (r.mode == mode && r.seed == seed) return r.accuracy;
  return std::nullopt;
}

bool filter_is_monotone(std::span<const SyntheticSample> candidates, std::span<const double> betas) {
  std::vector<double> sorted(betas.begin(), betas.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t a = 0; a + 1 < sorted.size(); ++a) {
    const auto lower = passing_candidates(candidates, sorted[a]);
    for (std::size_t b = a + 1; b < sorted.size(); ++b) {
      const auto higher = passing_candidates(candidates, sorted[b]);
      if (!std::includes(lower.begin(), lower.end(), higher.begin(), higher.end())) return false;
    }
  }
  return true;
}

std::string SensitivityReport::to_csv() const {
  std::ostringstream out;
  out << "top_k,beta,seed,accuracy,refined,fallback,initially_defective\n" << std::setprecision(17);
  for (const auto& r : rows)
    out << r.top_k << ',' << r.beta << ',' << r.seed << ',' << r.accuracy << ',' << r.refined << ',' << r.fallback
        << ',' << r.initially_defective << '\n';
  return out.str();
}

nlohmann::json SensitivityReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows)
    rows_json.push_back({{"top_k", r.top_k},
                         {"beta", r.beta},
                         {"seed", r.seed},
                         {"accuracy", r.accuracy},
                         {"refined", r.refined},
                         {"fallback", r.fallback},
                         {"initially_defective", r.initially_defective}});
  return {{"rows", rows_json}, {"monotone_checks", monotone_checks}, {"monotone_violations", monotone_violations}};
}

SensitivityReport run_sensitivity(const PipelineInputs& inputs, std::span<const int> top_ks,
                                  std::span<const double> betas, std::span<const std::uint64_t> seeds) {
  check_inputs(inputs);
  if (top_ks.empty() || betas.empty() || seeds.empty())
    throw InvalidArgument("run_sensitivity: grid axes must be non-empty");

  struct Cell {
    int k;
    double beta;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (auto s : seeds)
    for (int k : top_ks)
      for (double b : betas) cells.push_back({k, b, s});

  SensitivityReport report;
  report.rows.resize(cells.size());
  std::atomic<long> checks{0}, violations{0};
  const std::vector<double> beta_grid(betas.begin(), betas.end());
  parallel_for(cells.size(), inputs.threads, [&](std::size_t i) {
    const auto& cell = cells[i];
    DistillConfig cfg = inputs.distill;
    cfg.mode = SelectionMode::tplus_s;
    cfg.top_k = std::min(cell.k, cfg.num_candidates);
    cfg.beta = cell.beta;
    cfg.seed = cell.seed;
    DistillHooks hooks;
    hooks.on_candidates = [&](int, int, std::span<const SyntheticSample> cands) {
      ++checks;
      if (!filter_is_monotone(cands, beta_grid)) ++violations;
    };
    const auto result = distill(*inputs.train, *inputs.autoencoder, *inputs.generator, *inputs.detector, cfg, hooks);
    SeededRng rng = downstream_stream(cell.seed);
    const auto clf = train_downstream(result.dataset, inputs.downstream, rng);
    report.rows[i] = {cell.k, cell.beta, cell.seed, evaluate(clf, *inputs.test), result.report.refined,
                      result.report.fallback, result.report.initially_defective};
  });
  report.monotone_checks = checks;
  report.monotone_violations = violations;
  return report;
}

}  // namespace dgd
