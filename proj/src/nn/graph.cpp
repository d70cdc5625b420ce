#include "pdac/nn/graph.hpp"

#include <iomanip>
#include <sstream>

#include "pdac/error.hpp"
#include "pdac/nn/kernels.hpp"

namespace pdac::nn {
namespace {

ConvGeometry geometry_of(const LayerSpec& l) { return {l.kernel, l.stride, l.pad_lo, l.pad_hi}; }

std::size_t transposed_axis(std::size_t in, std::size_t k, std::size_t s, std::size_t lo, std::size_t hi,
                            std::size_t op) {
  const long v = static_cast<long>((in - 1) * s + k + op) - static_cast<long>(lo + hi);
  if (v <= 0) throw Error(ErrorKind::ShapeMismatch, "transposed convolution collapses an axis");
  return static_cast<std::size_t>(v);
}

TensorShape apply(const LayerSpec& l, const TensorShape& in) {
  switch (l.kind) {
    case LayerKind::Conv: {
      if (l.channels == 0) throw Error(ErrorKind::ShapeMismatch, "conv needs output channels");
      return {l.channels, geometry_of(l).output_extent(in.s)};
    }
    case LayerKind::ConvTranspose: {
      if (l.channels == 0) throw Error(ErrorKind::ShapeMismatch, "conv-transpose needs output channels");
      const Dim3 out{transposed_axis(in.s.d, l.kernel.d, l.stride.d, l.pad_lo.d, l.pad_hi.d, l.out_pad.d),
                     transposed_axis(in.s.h, l.kernel.h, l.stride.h, l.pad_lo.h, l.pad_hi.h, l.out_pad.h),
                     transposed_axis(in.s.w, l.kernel.w, l.stride.w, l.pad_lo.w, l.pad_hi.w, l.out_pad.w)};
      if (geometry_of(l).output_extent(out) != in.s) {
        throw Error(ErrorKind::ShapeMismatch, "conv-transpose output padding inconsistent with stride");
      }
      return {l.channels, out};
    }
    case LayerKind::MaxPool: {
      const Dim3 out{in.s.d / l.kernel.d, in.s.h / l.kernel.h, in.s.w / l.kernel.w};
      if (out.volume() == 0 || out.d * l.kernel.d != in.s.d || out.h * l.kernel.h != in.s.h ||
          out.w * l.kernel.w != in.s.w) {
        throw Error(ErrorKind::ShapeMismatch,
                    "max-pool window " + to_string(l.kernel) + " does not tile " + to_string(in.s));
      }
      return {in.c, out};
    }
    case LayerKind::BatchNorm:
    case LayerKind::ReLU:
    case LayerKind::Sigmoid:
    case LayerKind::Dropout:
      return in;
    case LayerKind::Flatten:
      return {in.count(), Dim3{1, 1, 1}};
    case LayerKind::Dense:
      if (l.channels == 0) throw Error(ErrorKind::ShapeMismatch, "dense needs units");
      return {l.channels, Dim3{1, 1, 1}};
    case LayerKind::GlobalAvgPool:
      return {in.c, Dim3{1, 1, 1}};
  }
  return in;
}

const char* kind_key(LayerKind k) {
  switch (k) {
    case LayerKind::Conv: return "conv";
    case LayerKind::ConvTranspose: return "conv_transpose";
    case LayerKind::MaxPool: return "max_pool";
    case LayerKind::BatchNorm: return "batch_norm";
    case LayerKind::ReLU: return "relu";
    case LayerKind::Sigmoid: return "sigmoid";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Dense: return "dense";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::GlobalAvgPool: return "global_avg_pool";
  }
  return "?";
}

LayerKind kind_from_key(const std::string& s) {
  for (auto k : {LayerKind::Conv, LayerKind::ConvTranspose, LayerKind::MaxPool, LayerKind::BatchNorm,
                 LayerKind::ReLU, LayerKind::Sigmoid, LayerKind::Flatten, LayerKind::Dense, LayerKind::Dropout,
                 LayerKind::GlobalAvgPool}) {
    if (s == kind_key(k)) return k;
  }
  throw Error(ErrorKind::BadCheckpoint, "unknown layer kind '" + s + "'");
}

nlohmann::json dim_json(const Dim3& d) { return nlohmann::json::array({d.d, d.h, d.w}); }
Dim3 dim_from(const nlohmann::json& j) { return {j.at(0).get<std::size_t>(), j.at(1).get<std::size_t>(), j.at(2).get<std::size_t>()}; }

}  // namespace

std::string_view to_string(LayerKind kind) noexcept { return kind_key(kind); }

std::string to_string(const TensorShape& s) { return std::to_string(s.c) + "@" + to_string(s.s); }

TensorShape ModelGraph::input_shape_of(std::size_t i, const std::vector<TensorShape>& shapes) const {
  TensorShape in = i == 0 ? input : shapes[i - 1];
  const auto& l = layers[i];
  if (l.skip_from >= 0) {
    if (static_cast<std::size_t>(l.skip_from) >= i) {
      throw Error(ErrorKind::ShapeMismatch, "skip link must come from an earlier layer");
    }
    const auto& skip = shapes[static_cast<std::size_t>(l.skip_from)];
    if (skip.s != in.s) {
      throw Error(ErrorKind::ShapeMismatch, "skip link from layer " + std::to_string(l.skip_from) + " (" +
                                                to_string(skip) + ") into layer " + std::to_string(i) + " (" +
                                                to_string(in) + ") joins different spatial extents");
    }
    in.c += skip.c;
  }
  return in;
}

std::vector<TensorShape> ModelGraph::infer_shapes() const {
  if (input.count() == 0) throw Error(ErrorKind::ShapeMismatch, "graph input shape is empty");
  std::vector<TensorShape> shapes;
  shapes.reserve(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    shapes.push_back(apply(layers[i], input_shape_of(i, shapes)));
  }
  return shapes;
}

TensorShape ModelGraph::output_shape() const {
  const auto shapes = infer_shapes();
  return shapes.empty() ? input : shapes.back();
}

std::size_t layer_parameters(const LayerSpec& l, const TensorShape& in) {
  switch (l.kind) {
    case LayerKind::Conv:
    case LayerKind::ConvTranspose:
      return l.channels * in.c * l.kernel.volume() + l.channels;
    case LayerKind::BatchNorm:
      return 2 * in.c;
    case LayerKind::Dense:
      return l.channels * in.count() + l.channels;
    default:
      return 0;
  }
}

std::size_t count_parameters(const ModelGraph& graph) {
  if (graph.layers.empty()) return 0;
  const auto shapes = graph.infer_shapes();
  std::size_t total = 0;
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    total += layer_parameters(graph.layers[i], graph.input_shape_of(i, shapes));
  }
  return total;
}

std::string describe(const ModelGraph& graph) {
  const auto shapes = graph.infer_shapes();
  std::ostringstream os;
  os << graph.name << "  input " << to_string(graph.input) << "\n";
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    const auto& l = graph.layers[i];
    os << std::setw(3) << i << "  " << std::left << std::setw(16) << kind_key(l.kind) << std::right;
    if (l.skip_from >= 0) os << " +skip(" << l.skip_from << ")";
    os << "  -> " << std::left << std::setw(16) << to_string(shapes[i]) << std::right
       << "  params " << layer_parameters(l, graph.input_shape_of(i, shapes));
    if (!l.name.empty()) os << "  " << l.name;
    os << "\n";
  }
  os << "total parameters " << count_parameters(graph) << "\n";
  return os.str();
}

nlohmann::json to_json(const ModelGraph& graph) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : graph.layers) {
    layers.push_back({{"kind", kind_key(l.kind)},
                      {"channels", l.channels},
                      {"kernel", dim_json(l.kernel)},
                      {"stride", dim_json(l.stride)},
                      {"pad_lo", dim_json(l.pad_lo)},
                      {"pad_hi", dim_json(l.pad_hi)},
                      {"out_pad", dim_json(l.out_pad)},
                      {"rate", l.rate},
                      {"skip_from", l.skip_from},
                      {"name", l.name}});
  }
  return {{"name", graph.name},
          {"input", {{"c", graph.input.c}, {"s", dim_json(graph.input.s)}}},
          {"init_seed", graph.init_seed},
          {"init", graph.init == InitScheme::HeNormal ? "he_normal" : "normal_0.02"},
          {"layers", layers}};
}

ModelGraph graph_from_json(const nlohmann::json& j) {
  try {
    ModelGraph g;
    g.name = j.at("name").get<std::string>();
    g.input = {j.at("input").at("c").get<std::size_t>(), dim_from(j.at("input").at("s"))};
    g.init_seed = j.at("init_seed").get<std::uint64_t>();
    g.init = j.at("init").get<std::string>() == "he_normal" ? InitScheme::HeNormal : InitScheme::Normal002;
    for (const auto& lj : j.at("layers")) {
      LayerSpec l;
      l.kind = kind_from_key(lj.at("kind").get<std::string>());
      l.channels = lj.at("channels").get<std::size_t>();
      l.kernel = dim_from(lj.at("kernel"));
      l.stride = dim_from(lj.at("stride"));
      l.pad_lo = dim_from(lj.at("pad_lo"));
      l.pad_hi = dim_from(lj.at("pad_hi"));
      l.out_pad = dim_from(lj.at("out_pad"));
      l.rate = lj.at("rate").get<double>();
      l.skip_from = lj.at("skip_from").get<int>();
      l.name = lj.value("name", std::string{});
      g.layers.push_back(l);
    }
    g.infer_shapes();
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::BadCheckpoint, std::string("malformed graph description: ") + e.what());
  }
}

}  // namespace pdac::nn
