#pragma once

#include <cstdint>

namespace cato::flops {

/// Thread-local multiply-add counter fed by matmul/bmm forward passes.
void add(std::uint64_t macs);
std::uint64_t count();
void reset();

/// Counts multiply-adds executed while in scope.
class Scope {
 public:
  Scope() : start_(count()) {}
  std::uint64_t elapsed() const { return count() - start_; }

 private:
  std::uint64_t start_;
};

}  // namespace cato::flops
