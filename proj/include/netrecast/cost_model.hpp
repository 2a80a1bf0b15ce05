#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "netrecast/network.hpp"

namespace netrecast {

// Which layers contribute to the headline totals. Convolutions always do;
// `full` adds the classifier's fully-connected layers. BN affine parameters
// are never in the headline; they are reported separately.
enum class CostConvention { conv_only, full };

struct CostEntry {
  int position = 0;  // -1 stem, n classifier
  std::string label;
  // Headline quantities under the report's convention.
  std::int64_t params = 0;
  std::int64_t mults = 0;
  std::int64_t act_reads = 0;   // input elements read by each layer
  std::int64_t act_writes = 0;  // output elements written by each layer
  // Always-available breakdown.
  std::int64_t conv_params = 0;
  std::int64_t linear_params = 0;
  std::int64_t bn_params = 0;
  std::int64_t linear_mults = 0;
};

// Per-image (batch 1) cost of one network at one input size.
struct CostReport {
  CostConvention convention = CostConvention::conv_only;
  std::int64_t in_channels = 0, height = 0, width = 0;
  std::int64_t params = 0;
  std::int64_t mults = 0;
  std::int64_t act_load = 0;  // reads convention
  std::int64_t act_writes = 0;
  std::int64_t bn_params = 0;
  std::int64_t linear_params = 0;
  std::int64_t linear_mults = 0;
  std::vector<CostEntry> blocks;
};

// Costs at the spec's own input size, or at `height` x `width` when given.
CostReport analyze_cost(const NetworkSpec& spec, CostConvention convention = CostConvention::conv_only);
CostReport analyze_cost(const NetworkSpec& spec, std::int64_t height, std::int64_t width,
                        CostConvention convention = CostConvention::conv_only);

std::int64_t count_params(const NetworkSpec& spec, CostConvention convention = CostConvention::conv_only);
std::int64_t count_mults(const NetworkSpec& spec, std::int64_t height, std::int64_t width,
                         CostConvention convention = CostConvention::conv_only);
std::int64_t count_activation_load(const NetworkSpec& spec, std::int64_t height, std::int64_t width,
                                   CostConvention convention = CostConvention::conv_only);

// Human-readable table.
std::string format_cost_text(const CostReport& report);
// key=value lines; totals first, then "block.<position>.<field>" entries.
std::string format_cost_kv(const CostReport& report);
std::map<std::string, std::string> parse_kv(const std::string& text);

std::string to_string(CostConvention c);
CostConvention parse_cost_convention(const std::string& name);

}  // namespace netrecast
