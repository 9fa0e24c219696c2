#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

namespace pmlog::harness {

// Seeded cooperative scheduler over ucontext fibers. All fibers run on the
// calling thread; a switch happens only when the running fiber calls Yield()
// or Preempt(), and the next fiber is drawn from the seeded RNG. A run is
// therefore a pure function of the seed and the fiber bodies.
class FiberScheduler {
 public:
  explicit FiberScheduler(uint64_t seed, double preempt_probability = 0.5, size_t stack_size = 256 * 1024);
  ~FiberScheduler();

  FiberScheduler(const FiberScheduler&) = delete;
  FiberScheduler& operator=(const FiberScheduler&) = delete;

  void Spawn(std::function<void()> body);

  // Runs until every fiber has returned.
  void Run();

  // From inside a fiber: give up the CPU.
  void Yield();
  // From inside a fiber: maybe give up the CPU.
  void Preempt();

  bool in_fiber() const { return current_ >= 0; }
  int current() const { return current_; }
  uint64_t switches() const { return switches_; }

  // Called on the scheduler side between two fiber slices.
  void SetSwitchObserver(std::function<void()> fn) { observer_ = std::move(fn); }

 private:
  struct Fiber;
  static void Trampoline(unsigned lo, unsigned hi);

  std::mt19937_64 rng_;
  double preempt_p_;
  size_t stack_size_;
  std::vector<std::unique_ptr<Fiber>> fibers_;
  struct Context;
  std::unique_ptr<Context> main_;
  int current_ = -1;
  uint64_t switches_ = 0;
  std::function<void()> observer_;
};

}  // namespace pmlog::harness
