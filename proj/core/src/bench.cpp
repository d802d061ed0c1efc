#include "attnpool/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "attnpool/errors.hpp"
#include "attnpool/instrument.hpp"
#include "attnpool/splitmix.hpp"

namespace attnpool::bench {

std::string_view to_string(Kind kind) {
  switch (kind) {
    case Kind::kFull: return "full";
    case Kind::kRankP: return "rank_p";
    case Kind::kCbp: return "cbp";
  }
  return "unknown";
}

Kind parse_kind(std::string_view s) {
  for (auto k : {Kind::kFull, Kind::kRankP, Kind::kCbp}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown bench kind '" + std::string(s) + "' (expected full, rank_p or cbp)");
}

namespace {

// Checked 64-bit arithmetic; a wrap would silently corrupt the cost model.
struct Checked {
  std::uint64_t v;
  const char* what;
  Checked operator*(std::uint64_t o) const {
    std::uint64_t r;
    if (__builtin_mul_overflow(v, o, &r)) throw ValidationError(std::string(what) + ": FLOP count overflows 64 bits");
    return {r, what};
  }
  Checked operator+(Checked o) const {
    std::uint64_t r;
    if (__builtin_add_overflow(v, o.v, &r)) throw ValidationError(std::string(what) + ": FLOP count overflows 64 bits");
    return {r, what};
  }
};

void require_positive(std::initializer_list<std::uint64_t> dims, const char* what) {
  for (auto d : dims) {
    if (d == 0) throw ValidationError(std::string(what) + ": dimensions must be positive");
  }
}

double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

Matrix random_matrix(std::size_t rows, std::size_t cols, SplitMix64& rng) {
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = rng.normal();
  return m;
}

}  // namespace

std::uint64_t flops_full_second_order(std::uint64_t n, std::uint64_t f, std::uint64_t k) {
  require_positive({n, f}, "flops_full_second_order");
  const Checked ff = Checked{f, "flops_full_second_order"} * f;
  return (ff * n * 2 + ff * k * 2).v;
}

std::uint64_t flops_rank_p(std::uint64_t n, std::uint64_t f, std::uint64_t k, std::uint64_t p) {
  require_positive({n, f, k, p}, "flops_rank_p");
  const Checked fc{f, "flops_rank_p"};
  return ((fc * n * 4 + fc * k * 2) * p).v;
}

std::uint64_t flops_cbp(std::uint64_t n, std::uint64_t f, std::uint64_t k, std::uint64_t d) {
  require_positive({n, f, k, d}, "flops_cbp");
  const Checked dc{d, "flops_cbp"};
  const Checked per_row = Checked{f, "flops_cbp"} * 4 + dc * d * 2;
  return (per_row * n + dc * k * 2).v;
}

std::uint64_t flops_analytic(Kind kind, const Dims& dims) {
  switch (kind) {
    case Kind::kFull: return flops_full_second_order(dims.n, dims.f, dims.k);
    case Kind::kRankP: return flops_rank_p(dims.n, dims.f, dims.k, dims.p);
    case Kind::kCbp: return flops_cbp(dims.n, dims.f, dims.k, dims.d);
  }
  return 0;
}

Inputs make_inputs(Kind kind, const Dims& dims, std::uint64_t seed) {
  require_positive({dims.n, dims.f, dims.k, dims.p, dims.d}, "make_inputs");
  SplitMix64 rng(seed);
  Inputs in;
  in.kind = kind;
  in.dims = dims;
  in.x = random_matrix(dims.n, dims.f, rng);
  switch (kind) {
    case Kind::kFull:
      in.per_class.reserve(dims.k);
      for (std::size_t c = 0; c < dims.k; ++c) in.per_class.push_back(init_uniform(dims.f, dims.f, dims.f, rng));
      break;
    case Kind::kRankP: in.attention = init_attention(dims.f, dims.k, dims.p, rng); break;
    case Kind::kCbp:
      in.sketch = SketchParams::make(dims.f, dims.d, rng.next());
      in.classifier = init_uniform(dims.d, dims.k, dims.d, rng);
      break;
  }
  return in;
}

Matrix run_scoring(const Inputs& in) {
  switch (in.kind) {
    case Kind::kFull: return score_second_order(in.x, in.per_class);
    case Kind::kRankP: return score_rank_p(in.x, *in.attention);
    case Kind::kCbp: return score_cbp(in.x, *in.sketch, in.classifier);
  }
  throw ValidationError("run_scoring: unknown kind");
}

Instrumented instrument(const Inputs& in) {
  Instrumented out;
  CounterScope scope;
  {
    const Matrix s = run_scoring(in);
  }
  const auto& c = scope.counters();
  out.flops = c.flops;
  out.peak_live_elements = c.peak_live_elements;
  out.largest_allocation = c.largest_allocation;
  out.allocations = c.allocations;
  return out;
}

bool rank_p_memory_ok(const Instrumented& m, const Dims& dims) {
  return m.peak_live_elements <= dims.n + dims.f + dims.k;
}

Result bench_wallclock(Kind kind, const Dims& dims, std::size_t repetitions, std::uint64_t seed,
                       double min_sample_ns) {
  if (repetitions == 0) throw ValidationError("bench_wallclock: repetitions must be >= 1");
  using Clock = std::chrono::steady_clock;
  const Inputs in = make_inputs(kind, dims, seed);

  Result r;
  r.kind = kind;
  r.dims = dims;
  r.flops_analytic = flops_analytic(kind, dims);
  r.memory = instrument(in);
  r.flops_measured = r.memory.flops;
  r.memory_ok = kind != Kind::kRankP || rank_p_memory_ok(r.memory, dims);

  double sink = 0.0;
  auto timed = [&](std::size_t calls) {
    const auto t0 = Clock::now();
    for (std::size_t i = 0; i < calls; ++i) sink += run_scoring(in)[0];
    return std::chrono::duration<double, std::nano>(Clock::now() - t0).count();
  };
  for (int i = 0; i < 5; ++i) timed(1);

  // Batch calls until one sample comfortably exceeds the clock resolution.
  std::size_t calls = 1;
  for (double t = timed(calls); t < min_sample_ns && calls < (1u << 24); t = timed(calls)) {
    calls *= t > 0.0 ? std::max<std::size_t>(2, static_cast<std::size_t>(min_sample_ns / t) + 1) : 16;
  }
  r.calls_per_repetition = calls;

  std::vector<double> samples(repetitions);
  for (auto& s : samples) s = timed(calls) / static_cast<double>(calls);
  std::sort(samples.begin(), samples.end());
  r.repetitions = repetitions;
  r.ns_median = quantile(samples, 0.5);
  r.ns_q1 = quantile(samples, 0.25);
  r.ns_q3 = quantile(samples, 0.75);
  r.ns_iqr = r.ns_q3 - r.ns_q1;
  [[maybe_unused]] volatile double keep = sink;
  return r;
}

double iqr_overlap(const Result& a, const Result& b) {
  const double lo = std::max(a.ns_q1, b.ns_q1);
  const double hi = std::min(a.ns_q3, b.ns_q3);
  const double narrower = std::min(a.ns_q3 - a.ns_q1, b.ns_q3 - b.ns_q1);
  if (narrower <= 0.0) return (lo <= hi) ? 1.0 : 0.0;
  return std::clamp((hi - lo) / narrower, 0.0, 1.0);
}

std::string csv_header() { return "kind,n,f,K,P,flops_analytic,flops_measured,ns_median,ns_iqr"; }

std::string csv_row(const Result& r) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(1);
  os << to_string(r.kind) << ',' << r.dims.n << ',' << r.dims.f << ',' << r.dims.k << ','
     << (r.kind == Kind::kRankP ? r.dims.p : 0) << ',' << r.flops_analytic << ',' << r.flops_measured << ','
     << r.ns_median << ',' << r.ns_iqr;
  return os.str();
}

}  // namespace attnpool::bench
