#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "attnpool/attention.hpp"
#include "attnpool/sketch.hpp"
#include "attnpool/tensor.hpp"

// Cost accounting for the three scoring strategies. FLOPs count a multiply
// and an add separately, so a multiply-add is 2.
namespace attnpool::bench {

enum class Kind { kFull, kRankP, kCbp };
std::string_view to_string(Kind kind);
Kind parse_kind(std::string_view s);  // ConfigError

struct Dims {
  std::size_t n = 49;
  std::size_t f = 64;
  std::size_t k = 10;
  std::size_t p = 1;   // rank_p only
  std::size_t d = 64;  // cbp only
};

// Closed forms. Throw ValidationError on a zero dim (K may be 0 for the full
// count) and on a result that does not fit in 64 bits.
std::uint64_t flops_full_second_order(std::uint64_t n, std::uint64_t f, std::uint64_t k);
std::uint64_t flops_rank_p(std::uint64_t n, std::uint64_t f, std::uint64_t k, std::uint64_t p);
// n(4f + 2d^2) + 2Kd: two count sketches per row, a direct d^2 circular
// convolution per row, then a d x K linear classifier.
std::uint64_t flops_cbp(std::uint64_t n, std::uint64_t f, std::uint64_t k, std::uint64_t d);
std::uint64_t flops_analytic(Kind kind, const Dims& dims);

// Seeded random inputs for one kind. Only the members the kind uses are set.
struct Inputs {
  Kind kind = Kind::kRankP;
  Dims dims;
  Matrix x;
  std::vector<Matrix> per_class;  // full: K dense f x f classifiers
  std::optional<AttentionParams> attention;
  std::optional<SketchParams> sketch;
  Matrix classifier;  // cbp: d x K
};
Inputs make_inputs(Kind kind, const Dims& dims, std::uint64_t seed = 1);

// One end-to-end scoring call (K x 1 scores).
Matrix run_scoring(const Inputs& in);

struct Instrumented {
  std::uint64_t flops = 0;
  std::size_t peak_live_elements = 0;  // scratch allocated during scoring
  std::size_t largest_allocation = 0;
  std::size_t allocations = 0;
};
Instrumented instrument(const Inputs& in);

// Rank-P scoring must stay within O(n + f + K) scratch per component and
// never allocate an f x f buffer.
bool rank_p_memory_ok(const Instrumented& m, const Dims& dims);

struct Result {
  Kind kind = Kind::kRankP;
  Dims dims;
  std::uint64_t flops_analytic = 0;
  std::uint64_t flops_measured = 0;
  double ns_median = 0.0;
  double ns_iqr = 0.0;
  double ns_q1 = 0.0;
  double ns_q3 = 0.0;
  std::size_t repetitions = 0;
  std::size_t calls_per_repetition = 1;  // raised when one call is below timer resolution
  Instrumented memory;
  bool memory_ok = true;  // always true for the full kind
};

// Five warm-up calls, then `repetitions` timed samples; reports per-call
// median and interquartile range. Samples shorter than `min_sample_ns`
// are batched over several calls.
Result bench_wallclock(Kind kind, const Dims& dims, std::size_t repetitions, std::uint64_t seed = 1,
                       double min_sample_ns = 2.0e5);

// Fraction of the narrower interquartile interval covered by the overlap
// of the two; 1 when both intervals are a single identical point.
double iqr_overlap(const Result& a, const Result& b);

std::string csv_header();  // kind,n,f,K,P,flops_analytic,flops_measured,ns_median,ns_iqr
std::string csv_row(const Result& r);

}  // namespace attnpool::bench
