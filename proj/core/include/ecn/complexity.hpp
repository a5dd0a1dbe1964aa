#pragma once

// Parameter and FLOP accounting from an ArchSpec alone (no model is built).
//
// Conventions:
//   conv       FLOPs = 2 * Ho * Wo * (Cin/groups * K^2 + b) * Cout, Params = (Cin/groups * K^2 + b) * Cout,
//              b = 1 with bias, 0 without; Ho, Wo are output dims
//   dense      FLOPs = 2 * T * (din + 1) * dout over T token rows
//   attention  FLOPs = 2 * rows * N * N * dh * heads for each of QK^T and AV
//   stencil    fixed 3x3 per-channel filter: FLOPs = 2 * H * W * 9 * C, no params
//   norm       0 FLOPs; batch norm 2C params, layer norm 2d params (running stats are buffers)
//   activation, pooling, softmax, upsample, elementwise add/mul, concat: 0 FLOPs
// Counts are per image (batch 1).

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ecn/arch_spec.hpp"

namespace ecn {

struct ComplexityRow {
  std::string layer;  // owning ArchSpec layer
  std::string name;   // sub-operation, e.g. "enc1.dw"
  std::string op;     // conv, dense, attention, stencil, norm
  std::uint64_t flops = 0;
  std::uint64_t params = 0;
};

struct ComplexityReport {
  Shape4 input;
  std::vector<ComplexityRow> rows;
  std::uint64_t total_flops = 0;
  std::uint64_t total_params = 0;

  std::uint64_t layer_params(std::string_view layer) const;
  std::uint64_t layer_flops(std::string_view layer) const;
};

std::uint64_t conv_flops(std::uint64_t h_out, std::uint64_t w_out, std::uint64_t c_in_per_group,
                         std::uint64_t k, std::uint64_t c_out, bool bias = true);
std::uint64_t conv_params(std::uint64_t c_in_per_group, std::uint64_t k, std::uint64_t c_out,
                          bool bias = true);

/// Both return the full report; they exist as separate names for readability at call sites.
ComplexityReport analyze_complexity(const ArchSpec& spec);
inline ComplexityReport count_params(const ArchSpec& spec) { return analyze_complexity(spec); }
inline ComplexityReport count_flops(const ArchSpec& spec) { return analyze_complexity(spec); }

/// Reference budget band for the default configuration.
struct BudgetBand {
  std::uint64_t params_min = 220'000;
  std::uint64_t params_max = 310'000;
  std::uint64_t flops_min = 300'000'000;
  std::uint64_t flops_max = 700'000'000;
};

struct BudgetCheck {
  bool params_ok = false;
  bool flops_ok = false;
  bool ok() const { return params_ok && flops_ok; }
};

BudgetCheck check_budget(const ComplexityReport& report, const BudgetBand& band = {});

/// Aligned text table with a conventions header and totals; budget flags appended.
std::string format_table(const ComplexityReport& report, const BudgetBand& band = {});
/// "layer,name,op,flops,params" rows followed by a "total" row.
std::string format_csv(const ComplexityReport& report);

}  // namespace ecn
