#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <sstream>

#include "cli.hpp"
#include "netrecast/checkpoint.hpp"
#include "netrecast/cost_model.hpp"
#include "netrecast/recast.hpp"

namespace py = pybind11;
using namespace netrecast;

namespace {

NetworkSpec spec_from(const std::string& arch, int classes) {
  const auto names = preset_names();
  if (std::find(names.begin(), names.end(), arch) != names.end()) return preset_spec(arch, classes);
  return parse_arch_spec(arch);
}

py::dict cost_dict(const CostReport& r) {
  py::dict d;
  d["convention"] = to_string(r.convention);
  d["params"] = r.params;
  d["mults"] = r.mults;
  d["act_load"] = r.act_load;
  d["act_writes"] = r.act_writes;
  d["bn_params"] = r.bn_params;
  py::list blocks;
  for (const auto& b : r.blocks) {
    py::dict e;
    e["position"] = b.position;
    e["label"] = b.label;
    e["params"] = b.params;
    e["mults"] = b.mults;
    e["act_reads"] = b.act_reads;
    e["act_writes"] = b.act_writes;
    blocks.append(e);
  }
  d["blocks"] = blocks;
  return d;
}

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor<float> to_tensor(const FloatArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  Tensor<float> t(shape);
  std::copy(a.data(), a.data() + a.size(), t.mutable_data().begin());
  return t;
}

FloatArray to_array(const Tensor<float>& t) {
  FloatArray a(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), a.mutable_data());
  return a;
}

}  // namespace

PYBIND11_MODULE(_netrecast, m) {
  m.doc() = "Block-wise network recasting: cost model, checkpoints, inference and the command line.";

  m.def("preset_names", &preset_names);
  m.def(
      "arch_text", [](const std::string& arch, int classes) { return format_arch_spec(spec_from(arch, classes)); },
      py::arg("arch"), py::arg("classes") = 10, "Architecture text of a preset (or normalized text of a spec).");
  m.def(
      "analyze",
      [](const std::string& arch, int classes, const std::string& convention) {
        return cost_dict(analyze_cost(spec_from(arch, classes), parse_cost_convention(convention)));
      },
      py::arg("arch"), py::arg("classes") = 10, py::arg("convention") = "conv_only",
      "Cost report of a preset name or architecture text.");
  m.def(
      "transform_plan",
      [](const std::string& arch, const std::string& kind, int classes) {
        return format_plan(make_transform_plan(spec_from(arch, classes), parse_block_kind(kind)));
      },
      py::arg("arch"), py::arg("kind"), py::arg("classes") = 10);
  m.def(
      "synth_dataset",
      [](std::uint64_t seed, std::int64_t n, int classes, std::int64_t size) {
        const Dataset d = synth_dataset(seed, n, classes, size);
        return py::make_tuple(to_array(d.images), py::array_t<int>(d.labels.size(), d.labels.data()));
      },
      py::arg("seed"), py::arg("n"), py::arg("classes"), py::arg("size") = 16,
      "Procedural images in [0, 1] (N, 3, size, size) and labels.");
  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = cli::run_cli(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs one command; returns (exit_code, stdout, stderr).");

  py::class_<Network>(m, "Network")
      .def_static("load", &load_checkpoint, py::arg("path"))
      .def_property_readonly("num_classes", &Network::num_classes)
      .def_property_readonly("num_blocks", &Network::num_blocks)
      .def_property_readonly("arch_text", [](const Network& n) { return format_arch_spec(n.spec()); })
      .def(
          "logits",
          [](Network& n, const FloatArray& x) {
            Tensor<float> in = to_tensor(x);
            Tensor<float> out;
            {
              py::gil_scoped_release nogil;
              out = n.logits(in, Mode::eval);
            }
            return to_array(out);
          },
          py::arg("x"), "Eval-mode logits for a normalized (N, C, H, W) float batch.");

  py::register_exception<Error>(m, "NetrecastError", PyExc_RuntimeError);
}
