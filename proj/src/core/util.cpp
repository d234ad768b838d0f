#include "core/util.hpp"

#include "core/errors.hpp"

namespace fibm {

const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Json: return "Json";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonHermitian: return "NonHermitian";
    case ErrorCode::BoundaryCollision: return "BoundaryCollision";
    case ErrorCode::NagyGap: return "NagyGap";
    case ErrorCode::ThresholdInInterval: return "ThresholdInInterval";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::CoverageGap: return "CoverageGap";
    case ErrorCode::AbsorptionViolation: return "AbsorptionViolation";
    case ErrorCode::IncompleteFamily: return "IncompleteFamily";
    case ErrorCode::NonCommuting: return "NonCommuting";
    case ErrorCode::PartitionGap: return "PartitionGap";
    case ErrorCode::FlatDirection: return "FlatDirection";
    case ErrorCode::NonCommutingPrincipal: return "NonCommutingPrincipal";
    case ErrorCode::SupportTouchesBoundary: return "SupportTouchesBoundary";
    case ErrorCode::MissingStage: return "MissingStage";
    case ErrorCode::CostGuard: return "CostGuard";
    case ErrorCode::Verification: return "Verification";
    case ErrorCode::Internal: return "Internal";
  }
  return "Unknown";
}

int thread_count() {
  static int cached = [] {
    if (const char* env = std::getenv("FIBM_THREADS")) {
      int v = std::atoi(env);
      if (v >= 1) return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return static_cast<int>(std::clamp<unsigned>(hw, 1u, 8u));
  }();
  return cached;
}

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body) {
  if (n <= 0) return;
  const int nt = thread_count();
  if (nt == 1 || n < 256) {
    body(0, n);
    return;
  }
  const std::int64_t chunks = std::min<std::int64_t>(nt, n);
  std::vector<std::thread> workers;
  workers.reserve(static_cast<size_t>(chunks));
  const std::int64_t step = (n + chunks - 1) / chunks;
  for (std::int64_t c = 0; c < chunks; ++c) {
    const std::int64_t lo = c * step;
    const std::int64_t hi = std::min<std::int64_t>(n, lo + step);
    if (lo >= hi) break;
    workers.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  for (auto& w : workers) w.join();
}

}  // namespace fibm
