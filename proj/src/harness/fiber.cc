#include "pmlog/harness/fiber.h"

#include <ucontext.h>

#include <cstdlib>
#include <stdexcept>

namespace pmlog::harness {

struct FiberScheduler::Context {
  ucontext_t ctx;
};

struct FiberScheduler::Fiber {
  ucontext_t ctx;
  std::unique_ptr<char[]> stack;
  std::function<void()> body;
  bool done = false;
  FiberScheduler* owner = nullptr;
};

FiberScheduler::FiberScheduler(uint64_t seed, double preempt_probability, size_t stack_size)
    : rng_(seed), preempt_p_(preempt_probability), stack_size_(stack_size), main_(std::make_unique<Context>()) {}

FiberScheduler::~FiberScheduler() = default;

void FiberScheduler::Spawn(std::function<void()> body) {
  auto f = std::make_unique<Fiber>();
  f->stack = std::make_unique<char[]>(stack_size_);
  f->body = std::move(body);
  f->owner = this;
  if (getcontext(&f->ctx) != 0) throw std::runtime_error("getcontext failed");
  f->ctx.uc_stack.ss_sp = f->stack.get();
  f->ctx.uc_stack.ss_size = stack_size_;
  f->ctx.uc_link = &main_->ctx;
  // makecontext only passes ints; split the pointer.
  auto p = reinterpret_cast<uintptr_t>(f.get());
  makecontext(&f->ctx, reinterpret_cast<void (*)()>(&FiberScheduler::Trampoline), 2,
              static_cast<unsigned>(p & 0xFFFFFFFFu), static_cast<unsigned>(static_cast<uint64_t>(p) >> 32));
  fibers_.push_back(std::move(f));
}

void FiberScheduler::Trampoline(unsigned lo, unsigned hi) {
  auto* f = reinterpret_cast<Fiber*>(static_cast<uintptr_t>((static_cast<uint64_t>(hi) << 32) | lo));
  f->body();
  f->done = true;
  // uc_link returns to the scheduler.
}

void FiberScheduler::Run() {
  std::vector<int> live;
  for (;;) {
    live.clear();
    for (size_t i = 0; i < fibers_.size(); ++i) {
      if (!fibers_[i]->done) live.push_back(static_cast<int>(i));
    }
    if (live.empty()) break;
    current_ = live[rng_() % live.size()];
    ++switches_;
    swapcontext(&main_->ctx, &fibers_[current_]->ctx);
    current_ = -1;
    if (observer_) observer_();
  }
  fibers_.clear();
}

void FiberScheduler::Yield() {
  if (current_ < 0) return;
  Fiber* f = fibers_[current_].get();
  swapcontext(&f->ctx, &main_->ctx);
}

void FiberScheduler::Preempt() {
  if (current_ < 0) return;
  if (std::uniform_real_distribution<double>(0, 1)(rng_) < preempt_p_) Yield();
}

}  // namespace pmlog::harness
