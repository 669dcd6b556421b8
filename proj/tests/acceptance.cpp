// Acceptance run: prints one PASS/FAIL/SKIP line per criterion and exits
// nonzero if any criterion fails.
//
// Criterion 6 needs the converted UCI sEMG DataBase1 directory; point the
// EMG_UCI_DB1 environment variable at it to enable that check.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "emg/burg.hpp"
#include "emg/config.hpp"
#include "emg/dataset.hpp"
#include "emg/metrics.hpp"
#include "emg/pipeline.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "tempdir.hpp"

namespace t = emg::testing;
using namespace emg;

namespace {

enum class Outcome { pass, fail, skip };

struct Verdict {
  Outcome outcome;
  std::string detail;
};

Verdict check(bool ok, std::string detail) { return {ok ? Outcome::pass : Outcome::fail, std::move(detail)}; }

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Verdict burg_oracle() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> len(8, 32);
  double worst = 0.0;
  for (std::uint64_t k = 0; k < 200; ++k) {
    const auto x = t::random_signal(len(rng), 20000 + k);
    burg::BurgState s = burg::init_state(x);
    for (int stage = 0; stage < 3; ++stage) {
      const double r = burg::compute_reflection(s);
      worst = std::max(worst, std::abs(r - t::grid_search_reflection(x, s.reflection_coeffs)));
      s = burg::advance(std::move(s));
    }
  }
  return check(worst <= 2e-5, fmt("200 signals x 3 stages, worst |R - grid| = %.3g (limit 2e-5)", worst));
}

Verdict ar_recovery() {
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> radius(0.3, 0.95);
  std::uniform_real_distribution<double> angle(0.2, std::numbers::pi - 0.2);
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto truth = t::ar2_from_poles(radius(rng), angle(rng));
    const auto x = t::simulate_ar(truth, 8192, 3000 + seed);
    const auto m = burg::burg_fit(x, 2, 500.0);
    total += std::abs(m.ar_coeffs[0] - truth[0]) + std::abs(m.ar_coeffs[1] - truth[1]);
  }
  const double mae = total / 20.0;
  return check(mae < 0.05, fmt("10 AR(2) models, N = 8192, coefficient MAE = %.4f (limit 0.05)", mae));
}

Verdict psd_variance() {
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> refl(-0.85, 0.85);
  std::uniform_int_distribution<int> order(1, 4);
  double worst = 0.0;
  for (std::uint64_t k = 0; k < 10; ++k) {
    std::vector<double> reflections(static_cast<std::size_t>(order(rng)));
    for (auto& r : reflections)
      r = refl(rng);
    const auto a = t::polynomial_from_reflections(reflections);
    const auto x = t::simulate_ar(a, 100000, 4000 + k);
    const auto m = burg::burg_fit(x, static_cast<int>(a.size()), 500.0);
    const auto psd = burg::psd_from_model(m, 4097);
    const double ratio = t::two_sided_integral(psd.frequencies, psd.power) / t::sample_variance(x);
    worst = std::max(worst, std::abs(ratio - 1.0));
  }
  return check(worst < 0.10, fmt("10 stable models, worst |integral/variance - 1| = %.3g (limit 0.10)", worst));
}

Verdict gradient_checks() {
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto net = nn::make_network(t::desk_scale_spec());
    nn::init_uniform_fan_in(net, seed);
    const auto res = t::check_gradients(net, t::random_features(3, 8, 5000 + seed));
    worst = std::max(worst, res.worst_relative_error);
    checked += res.checked;
  }
  return check(worst < 1e-4, fmt("20 seeds, %.0f parameter checks, worst relative error = %.3g (limit 1e-4)",
                                 static_cast<double>(checked), worst));
}

RunConfig synthetic_config(std::uint64_t seed, const std::filesystem::path& out) {
  RunConfig cfg;
  cfg.seed = seed;
  cfg.synthetic = SyntheticSource{30, 512};
  cfg.out = out;
  return cfg;
}

Verdict end_to_end_synthetic() {
  t::TempDir dir;
  const auto start = std::chrono::steady_clock::now();
  const auto a = run_training(synthetic_config(1, dir / "a"));
  write_run(a, dir / "a");
  const auto b = run_training(synthetic_config(1, dir / "b"));
  write_run(b, dir / "b");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool identical = slurp(dir / "a" / "summary.csv") == slurp(dir / "b" / "summary.csv");
  const double acc = a.report.model_accuracy;
  std::string detail = fmt("test accuracy %.4f (limit 0.95), max %.4f; ", acc, a.report.max_accuracy);
  detail += identical ? "summary.csv byte-identical across two runs" : "summary.csv DIFFERS between runs";
  detail += fmt("; %.0f s for both runs (limit 600)", secs);
  return check(acc >= 0.95 && identical && secs < 600.0, detail);
}

Verdict real_database() {
  const char* path = std::getenv("EMG_UCI_DB1");
  if (!path || !*path)
    return {Outcome::skip, "set EMG_UCI_DB1 to the converted DataBase1 directory to run this check"};
  t::TempDir dir;
  RunConfig cfg;
  cfg.seed = 1;
  cfg.dataset = path;
  cfg.out = dir / "db1";
  const auto run = run_training(cfg);
  write_run(run, cfg.out);
  const auto& r = run.report;
  const double ref_model = 0.963, ref_max = 0.985, ref_avg = 0.9852;
  std::ostringstream os;
  os << fmt("model %.4f (limit 0.90), max %.4f at epoch ", r.model_accuracy, r.max_accuracy)
     << r.max_accuracy_epoch << " (limit 0.93), average " << fmt("%.4f", r.average_accuracy)
     << fmt("; gap to published reference: model %+.4f, max %+.4f, average %+.4f", r.model_accuracy - ref_model,
            r.max_accuracy - ref_max, r.average_accuracy - ref_avg);
  return check(r.model_accuracy >= 0.90 && r.max_accuracy >= 0.93, os.str());
}

Verdict metric_identities() {
  std::mt19937_64 rng(707);
  std::uniform_int_distribution<std::size_t> cell(0, 50);
  std::bernoulli_distribution sparse(0.3);
  bool exact_accuracy = true, f1_in_range = true;
  double worst_uniform = 0.0;
  for (int k = 0; k < 1000; ++k) {
    metrics::ConfusionMatrix cm;
    for (std::size_t i = 0; i < kNumClasses; ++i)
      for (std::size_t j = 0; j < kNumClasses; ++j)
        cm.at(i, j) = sparse(rng) ? 0 : cell(rng);
    cm.at(static_cast<std::size_t>(k) % kNumClasses, 0) += 1;
    exact_accuracy &=
        metrics::accuracy(cm) == static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
    const double f1 = metrics::f1_weighted(cm);
    f1_in_range &= f1 >= 0.0 && f1 <= 1.0;

    // Circulant matrix: balanced supports and one shared per-class F1.
    metrics::ConfusionMatrix circ;
    for (std::size_t i = 0; i < kNumClasses; ++i)
      for (std::size_t j = 0; j < kNumClasses; ++j)
        circ.at(i, j) = cm.at(0, (j + kNumClasses - i) % kNumClasses) + (i == j ? 1 : 0);
    const auto per_class = metrics::per_class_f1(circ);
    worst_uniform = std::max(worst_uniform, std::abs(metrics::f1_weighted(circ) - per_class[0]));
  }
  std::string detail = "1000 matrices: accuracy == trace/total ";
  detail += exact_accuracy ? "always" : "VIOLATED";
  detail += ", weighted F1 in [0,1] ";
  detail += f1_in_range ? "always" : "VIOLATED";
  detail += fmt(", uniform-F1 identity worst deviation %.3g (limit 1e-12)", worst_uniform);
  return check(exact_accuracy && f1_in_range && worst_uniform <= 1e-12, detail);
}

Verdict split_arithmetic() {
  const auto counts = [](std::size_t per_class) {
    std::vector<ClassLabel> labels;
    for (std::size_t c = 0; c < kNumClasses; ++c)
      labels.insert(labels.end(), per_class, label_from_index(c));
    const auto plan = split_labels(labels, 0.7, 8);
    return std::pair{plan.train_indices.size(), plan.test_indices.size()};
  };
  const auto [tr1, te1] = counts(150);
  const auto [tr2, te2] = counts(300);
  std::ostringstream os;
  os << "900 -> " << tr1 << '/' << te1 << ", 1800 -> " << tr2 << '/' << te2 << " (expected 630/270, 1260/540)";
  return check(tr1 == 630 && te1 == 270 && tr2 == 1260 && te2 == 540, os.str());
}

} // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"Burg oracle equivalence", burg_oracle},
      {"AR coefficient recovery", ar_recovery},
      {"PSD variance consistency", psd_variance},
      {"gradient checks", gradient_checks},
      {"end-to-end synthetic", end_to_end_synthetic},
      {"DataBase1 reproduction", real_database},
      {"metric identities", metric_identities},
      {"split arithmetic", split_arithmetic},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {Outcome::fail, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const char* tag = v.outcome == Outcome::pass ? "PASS" : v.outcome == Outcome::fail ? "FAIL" : "SKIP";
    failures += v.outcome == Outcome::fail;
    std::printf("[%s] %zu %s: %s (%.1f s)\n", tag, i + 1, criteria[i].first, v.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
