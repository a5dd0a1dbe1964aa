#include "ecn/ablation.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "ecn/synthetic.hpp"

namespace ecn {

AblationReport run_ablation(const AblationConfig& cfg) {
  const std::vector<Sample> data =
      make_synthetic_dataset(cfg.train_count + cfg.val_count, cfg.image_size, cfg.data_seed);
  const std::vector<Sample> train_set(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(cfg.train_count));
  const std::vector<Sample> val_set(data.begin() + static_cast<std::ptrdiff_t>(cfg.train_count), data.end());

  std::vector<std::string> variants{"full"};
  variants.insert(variants.end(), cfg.variants.begin(), cfg.variants.end());
  std::vector<ArchSpec> specs;
  for (const std::string& v : variants) {
    ArchSpec s = cfg.spec;
    if (v != "full") disable_block(s.ablation, v);
    trace_spec(s);
    specs.push_back(std::move(s));
  }

  AblationReport report;
  for (const std::string& v : variants) {
    for (std::uint64_t seed : cfg.seeds) report.runs.push_back({v, seed, 0.0});
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < report.runs.size(); i = next++) {
      try {
        AblationRun& run = report.runs[i];
        TrainConfig tc = cfg.train;
        tc.seed = run.seed;
        tc.log = nullptr;
        const std::size_t vi = i / cfg.seeds.size();
        const TrainResult r = train(specs[vi], train_set, val_set, tc);
        double best = 0.0;
        for (const EpochRecord& e : r.epochs) {
          if (e.val) best = std::max(best, e.val->miou);
        }
        run.best_miou = best;
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(cfg.threads, report.runs.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  const std::size_t k = cfg.seeds.size();
  for (std::size_t v = 1; v < variants.size(); ++v) {
    AblationComparison c{variants[v], 0, k, 0.0, 0.0};
    for (std::size_t s = 0; s < k; ++s) {
      const double full = report.runs[s].best_miou;
      const double abl = report.runs[v * k + s].best_miou;
      if (full >= abl) ++c.full_at_least_as_good;
      c.mean_full += full / static_cast<double>(k);
      c.mean_ablated += abl / static_cast<double>(k);
    }
    report.comparisons.push_back(c);
  }
  return report;
}

std::string format_ablation(const AblationReport& report) {
  std::ostringstream os;
  char buf[160];
  for (const AblationRun& r : report.runs) {
    std::snprintf(buf, sizeof buf, "variant=%s seed=%llu best_miou=%.6f\n", r.variant.c_str(),
                  static_cast<unsigned long long>(r.seed), r.best_miou);
    os << buf;
  }
  for (const AblationComparison& c : report.comparisons) {
    std::snprintf(buf, sizeof buf, "disable=%s full_ge_ablated=%zu/%zu mean_full=%.6f mean_ablated=%.6f\n",
                  c.variant.c_str(), c.full_at_least_as_good, c.seeds, c.mean_full, c.mean_ablated);
    os << buf;
  }
  return os.str();
}

}  // namespace ecn
