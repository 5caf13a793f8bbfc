// SPDX-License-Identifier: Apache-2.0
#include <chrono>
#include <limits>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>
#include <sys/utsname.h>

#include "stst/error.hpp"
#include "stst/pipeline.hpp"

namespace stst {

std::string machine_descriptor() {
  std::ostringstream s;
  utsname u{};
  if (uname(&u) == 0) {
    s << u.sysname << ' ' << u.release << ' ' << u.machine;
  } else {
    s << "unknown-os";
  }
  s << ", " << std::thread::hardware_concurrency() << " hw threads";
#if defined(__clang__)
  s << ", clang " << __clang_major__ << '.' << __clang_minor__;
#elif defined(__GNUC__)
  s << ", gcc " << __GNUC__ << '.' << __GNUC_MINOR__;
#endif
  return s.str();
}

std::vector<BenchResult> run_bench(std::span<const Method> methods, std::span<const RgbImage> patches,
                                   const NormalizerOptions& options, int repetitions) {
  if (repetitions < 1) throw Error(ErrorKind::Usage, "repetitions must be >= 1");
  const auto machine = machine_descriptor();
  std::vector<BenchResult> out;
  for (auto method : methods) {
    BenchResult r;
    r.method = std::string(to_string(method));
    r.patch_count = patches.size();
    r.machine = machine;
    r.repetitions = repetitions;
    try {
      auto opts = options;
      if (!requires_reference(method)) opts.reference.reset();
      const auto n = Normalizer::create(method, opts);
      if (!patches.empty()) {
        (void)n.apply(patches[0], 0);
        double best = std::numeric_limits<double>::infinity();
        for (int rep = 0; rep < repetitions; ++rep) {
          const auto t0 = std::chrono::steady_clock::now();
          for (std::size_t i = 0; i < patches.size(); ++i) (void)n.apply(patches[i], i);
          best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        }
        r.total_seconds = best;
        r.per_patch_ms = best * 1000.0 / static_cast<double>(patches.size());
      }
    } catch (const std::exception& e) {
      r.failed = true;
      r.error = e.what();
      r.total_seconds = 0.0;
      r.per_patch_ms = 0.0;
    }
    out.push_back(std::move(r));
  }
  return out;
}

nlohmann::json to_json(std::span<const BenchResult> results) {
  nlohmann::json j;
  j["policy"] = kBenchPolicy;
  j["results"] = nlohmann::json::array();
  for (const auto& r : results) {
    nlohmann::json e{{"method", r.method},
                     {"patch_count", r.patch_count},
                     {"total_seconds", r.total_seconds},
                     {"per_patch_ms", r.per_patch_ms},
                     {"machine", r.machine},
                     {"repetitions", r.repetitions},
                     {"failed", r.failed}};
    if (r.failed) e["error"] = r.error;
    j["results"].push_back(std::move(e));
  }
  return j;
}

std::string bench_table_csv(std::span<const BenchResult> results) {
  std::ostringstream out;
  out << "Methods,Time (sec),Per patch (ms),Patches,Status\n";
  out.precision(6);
  for (const auto& r : results) {
    out << r.method << ',';
    if (r.failed) {
      out << "n/a,n/a," << r.patch_count << ",failed\n";
    } else {
      out << std::fixed << r.total_seconds << ',' << r.per_patch_ms << std::defaultfloat << ',' << r.patch_count
          << ",ok\n";
    }
  }
  return out.str();
}

}  // namespace stst
