#include "netrecast/cost_model.hpp"

#include <iomanip>
#include <sstream>

namespace netrecast {

std::string to_string(CostConvention c) { return c == CostConvention::full ? "full" : "conv_only"; }

CostConvention parse_cost_convention(const std::string& name) {
  if (name == "conv_only" || name == "conv-only" || name == "conv") return CostConvention::conv_only;
  if (name == "full") return CostConvention::full;
  throw ConfigError("unknown cost convention '" + name + "' (expected conv_only or full)");
}

CostReport analyze_cost(const NetworkSpec& spec, CostConvention convention) {
  return analyze_cost(spec, spec.height, spec.width, convention);
}

CostReport analyze_cost(const NetworkSpec& spec, std::int64_t height, std::int64_t width,
                        CostConvention convention) {
  NetworkSpec sized = spec;
  sized.height = height;
  sized.width = width;
  sized.validate();

  CostReport r;
  r.convention = convention;
  r.in_channels = spec.in_channels;
  r.height = height;
  r.width = width;
  const bool with_linear = convention == CostConvention::full;
  const int n = static_cast<int>(spec.blocks.size());
  std::int64_t h = height, w = width;
  for (int p = -1; p <= n; ++p) {
    const BlockSpec& b = sized.at(p);
    CostEntry e;
    e.position = p;
    e.label = (p == -1 ? std::string("stem") : p == n ? std::string("classifier") : "block " + std::to_string(p)) +
              " " + describe(b);
    for (const auto& l : block_layers(b, h, w)) {
      switch (l.type) {
        case LayerInfo::Type::conv: {
          const std::int64_t weights =
              static_cast<std::int64_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel;
          e.conv_params += weights;
          e.params += weights;
          e.mults += weights * l.out_h * l.out_w;
          e.act_reads += static_cast<std::int64_t>(l.in_channels) * l.in_h * l.in_w;
          e.act_writes += static_cast<std::int64_t>(l.out_channels) * l.out_h * l.out_w;
          break;
        }
        case LayerInfo::Type::linear: {
          const std::int64_t weights = static_cast<std::int64_t>(l.out_channels) * l.in_channels;
          e.linear_params += weights + (l.bias ? l.out_channels : 0);
          e.linear_mults += weights;
          if (with_linear) {
            e.params += weights + (l.bias ? l.out_channels : 0);
            e.mults += weights;
            e.act_reads += l.in_channels;
            e.act_writes += l.out_channels;
          }
          break;
        }
        case LayerInfo::Type::batchnorm:
          e.bn_params += 2 * static_cast<std::int64_t>(l.out_channels);
          break;
      }
    }
    r.params += e.params;
    r.mults += e.mults;
    r.act_load += e.act_reads;
    r.act_writes += e.act_writes;
    r.bn_params += e.bn_params;
    r.linear_params += e.linear_params;
    r.linear_mults += e.linear_mults;
    r.blocks.push_back(std::move(e));
    std::tie(h, w) = b.output_hw(h, w);
  }
  return r;
}

std::int64_t count_params(const NetworkSpec& spec, CostConvention convention) {
  return analyze_cost(spec, convention).params;
}

std::int64_t count_mults(const NetworkSpec& spec, std::int64_t height, std::int64_t width,
                         CostConvention convention) {
  return analyze_cost(spec, height, width, convention).mults;
}

std::int64_t count_activation_load(const NetworkSpec& spec, std::int64_t height, std::int64_t width,
                                   CostConvention convention) {
  return analyze_cost(spec, height, width, convention).act_load;
}

namespace {
std::string human(std::int64_t v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  if (v >= 1'000'000'000) os << static_cast<double>(v) / 1e9 << "B";
  else if (v >= 1'000'000) os << static_cast<double>(v) / 1e6 << "M";
  else if (v >= 1'000) os << static_cast<double>(v) / 1e3 << "K";
  else os << v;
  return os.str();
}
}  // namespace

std::string format_cost_text(const CostReport& r) {
  std::ostringstream os;
  os << "input " << r.in_channels << "x" << r.height << "x" << r.width << ", convention "
     << to_string(r.convention) << "\n";
  os << std::left << std::setw(44) << "block" << std::right << std::setw(14) << "params" << std::setw(16)
     << "mults" << std::setw(14) << "act_reads" << std::setw(14) << "act_writes" << "\n";
  for (const auto& e : r.blocks) {
    os << std::left << std::setw(44) << e.label.substr(0, 43) << std::right << std::setw(14) << e.params
       << std::setw(16) << e.mults << std::setw(14) << e.act_reads << std::setw(14) << e.act_writes << "\n";
  }
  os << "total params      " << r.params << " (" << human(r.params) << ")\n";
  os << "total mults       " << r.mults << " (" << human(r.mults) << ")\n";
  os << "act load / image  " << r.act_load << " (" << human(r.act_load) << ", reads)\n";
  os << "act writes/image  " << r.act_writes << " (" << human(r.act_writes) << ")\n";
  os << "bn params         " << r.bn_params << "\n";
  os << "linear params     " << r.linear_params << ", linear mults " << r.linear_mults << "\n";
  return os.str();
}

std::string format_cost_kv(const CostReport& r) {
  std::ostringstream os;
  os << "convention=" << to_string(r.convention) << "\n";
  os << "input=" << r.in_channels << "x" << r.height << "x" << r.width << "\n";
  os << "params=" << r.params << "\n";
  os << "mults=" << r.mults << "\n";
  os << "act_load=" << r.act_load << "\n";
  os << "act_writes=" << r.act_writes << "\n";
  os << "bn_params=" << r.bn_params << "\n";
  os << "linear_params=" << r.linear_params << "\n";
  os << "linear_mults=" << r.linear_mults << "\n";
  for (const auto& e : r.blocks) {
    const std::string k = "block." + std::to_string(e.position) + ".";
    os << k << "label=" << e.label << "\n";
    os << k << "params=" << e.params << "\n";
    os << k << "mults=" << e.mults << "\n";
    os << k << "act_reads=" << e.act_reads << "\n";
    os << k << "act_writes=" << e.act_writes << "\n";
    os << k << "bn_params=" << e.bn_params << "\n";
  }
  return os.str();
}

std::map<std::string, std::string> parse_kv(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find('=');
    if (line.empty() || line[0] == '#' || eq == std::string::npos) continue;
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

}  // namespace netrecast
