#pragma once

#include <cstddef>
#include <cstdint>
#include <new>

namespace attnpool {

// Per-thread operation counters. Only active inside a CounterScope, so the
// hot paths pay a single branch when nobody is measuring.
struct OpCounters {
  std::uint64_t flops = 0;            // multiply and add counted separately
  std::size_t live_elements = 0;      // doubles currently allocated by Matrix
  std::size_t peak_live_elements = 0;
  std::size_t largest_allocation = 0;  // largest single Matrix buffer
  std::size_t allocations = 0;
};

namespace detail {
struct CounterState {
  bool enabled = false;
  OpCounters counters;
};
CounterState& counter_state() noexcept;
}  // namespace detail

inline void count_flops(std::uint64_t n) noexcept {
  auto& st = detail::counter_state();
  if (st.enabled) st.counters.flops += n;
}

// Resets the thread's counters on entry and stops counting on exit.
// Scopes do not nest; the inner scope wins and disables counting on exit.
class CounterScope {
 public:
  CounterScope() noexcept;
  ~CounterScope();
  CounterScope(const CounterScope&) = delete;
  CounterScope& operator=(const CounterScope&) = delete;

  const OpCounters& counters() const noexcept;
};

// Allocator for Matrix storage that feeds the allocation counters.
template <typename T>
struct CountingAllocator {
  using value_type = T;

  CountingAllocator() noexcept = default;
  template <typename U>
  CountingAllocator(const CountingAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    auto& st = detail::counter_state();
    if (st.enabled) {
      auto& c = st.counters;
      c.live_elements += n;
      ++c.allocations;
      if (c.live_elements > c.peak_live_elements) c.peak_live_elements = c.live_elements;
      if (n > c.largest_allocation) c.largest_allocation = n;
    }
    return static_cast<T*>(::operator new(n * sizeof(T)));
  }

  void deallocate(T* p, std::size_t n) noexcept {
    auto& st = detail::counter_state();
    if (st.enabled) {
      auto& c = st.counters;
      c.live_elements = c.live_elements >= n ? c.live_elements - n : 0;
    }
    ::operator delete(p);
  }

  template <typename U>
  bool operator==(const CountingAllocator<U>&) const noexcept {
    return true;
  }
};

}  // namespace attnpool
