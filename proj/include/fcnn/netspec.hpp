#pragma once

#include <array>
#include <cctype>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fcnn {

enum class LayerKind { Conv, Pool, ReLU, Sig };
enum class PoolType { Max, Ave };

struct LayerSpec {
  LayerKind kind;
  int out_channels = 0;       // Conv only
  int kernel = 0;             // Conv/Pool
  int stride = 0;             // Conv/Pool
  PoolType pool_type = PoolType::Max;  // Pool only

  bool operator==(const LayerSpec& o) const {
    if (kind != o.kind) return false;
    switch (kind) {
      case LayerKind::Conv:
        return out_channels == o.out_channels && kernel == o.kernel &&
               stride == o.stride;
      case LayerKind::Pool:
        return pool_type == o.pool_type && kernel == o.kernel &&
               stride == o.stride;
      default:
        return true;
    }
  }
};

struct NetworkSpec {
  std::vector<LayerSpec> layers;
  int input_channels = 1;

  bool operator==(const NetworkSpec& o) const {
    return layers == o.layers && input_channels == o.input_channels;
  }
};

/// The crowd-segmentation architecture used throughout: two conv-pool
/// blocks, four 3x3 fusion convs, and a 1x1 conv with sigmoid output.
inline constexpr std::string_view kDefaultSpec =
    "Conv(32,7,1) - ReLU - Pool(MAX,2,2) - Conv(64,7,1) - ReLU - "
    "Pool(MAX,2,2) - Conv(128,3,1) - ReLU - Conv(128,3,1) - ReLU - "
    "Conv(64,3,1) - ReLU - Conv(16,3,1) - ReLU - Conv(1,1,1) - Sig";

namespace detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(c));
  return out;
}

inline std::string strip_ws(std::string_view s) {
  std::string out;
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c))) out += c;
  return out;
}

inline int parse_int(const std::string& s, const std::string& where) {
  if (s.empty()) throw std::invalid_argument(where + ": empty field");
  for (char c : s)
    if (!std::isdigit(static_cast<unsigned char>(c)))
      throw std::invalid_argument(where + ": non-integer field '" + s + "'");
  return std::stoi(s);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

/// Parses the layer annotation string, e.g. "Conv(32,7,1) - ReLU".
/// Tokens are separated by '-'; keywords are case-insensitive and
/// whitespace is ignored.
inline NetworkSpec parse_spec(std::string_view text, int input_channels = 1) {
  NetworkSpec spec;
  spec.input_channels = input_channels;
  const std::string compact = detail::strip_ws(text);
  if (compact.empty()) throw std::invalid_argument("parse_spec: empty spec");
  for (const std::string& token : detail::split(compact, '-')) {
    if (token.empty())
      throw std::invalid_argument("parse_spec: empty token (stray '-')");
    const std::string low = detail::lower(token);
    LayerSpec layer;
    if (low == "relu") {
      layer.kind = LayerKind::ReLU;
    } else if (low == "sig") {
      layer.kind = LayerKind::Sig;
    } else if (low.starts_with("conv(") && low.ends_with(")")) {
      layer.kind = LayerKind::Conv;
      auto fields =
          detail::split(low.substr(5, low.size() - 6), ',');
      if (fields.size() != 3)
        throw std::invalid_argument("parse_spec: Conv expects 3 fields, got " +
                                    std::to_string(fields.size()) + " in '" +
                                    token + "'");
      layer.out_channels = detail::parse_int(fields[0], "Conv");
      layer.kernel = detail::parse_int(fields[1], "Conv");
      layer.stride = detail::parse_int(fields[2], "Conv");
      if (layer.out_channels < 1 || layer.kernel < 1 || layer.stride < 1)
        throw std::invalid_argument("parse_spec: Conv fields must be >= 1");
    } else if (low.starts_with("pool(") && low.ends_with(")")) {
      layer.kind = LayerKind::Pool;
      auto fields =
          detail::split(low.substr(5, low.size() - 6), ',');
      if (fields.size() != 3)
        throw std::invalid_argument("parse_spec: Pool expects 3 fields, got " +
                                    std::to_string(fields.size()) + " in '" +
                                    token + "'");
      if (fields[0] == "max")
        layer.pool_type = PoolType::Max;
      else if (fields[0] == "ave")
        layer.pool_type = PoolType::Ave;
      else
        throw std::invalid_argument("parse_spec: unknown pool type '" +
                                    fields[0] + "'");
      layer.kernel = detail::parse_int(fields[1], "Pool");
      layer.stride = detail::parse_int(fields[2], "Pool");
      if (layer.kernel < 1 || layer.stride < 1)
        throw std::invalid_argument("parse_spec: Pool fields must be >= 1");
    } else {
      throw std::invalid_argument("parse_spec: unknown keyword '" + token +
                                  "'");
    }
    spec.layers.push_back(layer);
  }
  return spec;
}

inline std::string format_spec(const NetworkSpec& spec) {
  std::string out;
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    if (i) out += " - ";
    const LayerSpec& l = spec.layers[i];
    switch (l.kind) {
      case LayerKind::Conv:
        out += "Conv(" + std::to_string(l.out_channels) + "," +
               std::to_string(l.kernel) + "," + std::to_string(l.stride) + ")";
        break;
      case LayerKind::Pool:
        out += std::string("Pool(") +
               (l.pool_type == PoolType::Max ? "MAX" : "AVE") + "," +
               std::to_string(l.kernel) + "," + std::to_string(l.stride) + ")";
        break;
      case LayerKind::ReLU:
        out += "ReLU";
        break;
      case LayerKind::Sig:
        out += "Sig";
        break;
    }
  }
  return out;
}

struct LayerGeometry {
  int receptive_field = 1;  // cumulative, after this layer
  int jump = 1;             // input pixels per output step, cumulative
  int padding = 0;          // this layer's per-side padding
};

struct GeometryReport {
  std::vector<LayerGeometry> per_layer;
  int receptive_field = 1;
  int output_stride = 1;
};

/// Cumulative receptive field and output stride. Only the geometry the
/// recurrence covers is accepted: stride-1 same-padded convs and
/// non-overlapping pools.
inline GeometryReport receptive_field(const NetworkSpec& spec) {
  GeometryReport rep;
  int r = 1, jump = 1;
  for (const LayerSpec& l : spec.layers) {
    LayerGeometry geo;
    switch (l.kind) {
      case LayerKind::Conv:
        if (l.stride != 1)
          throw std::invalid_argument(
              "receptive_field: conv stride must be 1 (got " +
              std::to_string(l.stride) + ")");
        if (l.kernel % 2 == 0)
          throw std::invalid_argument(
              "receptive_field: conv kernel must be odd for same padding");
        r += (l.kernel - 1) * jump;
        geo.padding = l.kernel / 2;
        break;
      case LayerKind::Pool:
        if (l.kernel != l.stride)
          throw std::invalid_argument(
              "receptive_field: only non-overlapping pooling supported "
              "(kernel " +
              std::to_string(l.kernel) + ", stride " +
              std::to_string(l.stride) + ")");
        r += (l.kernel - 1) * jump;
        jump *= l.stride;
        break;
      case LayerKind::ReLU:
      case LayerKind::Sig:
        break;
    }
    geo.receptive_field = r;
    geo.jump = jump;
    rep.per_layer.push_back(geo);
  }
  rep.receptive_field = r;
  rep.output_stride = jump;
  return rep;
}

/// Output shape for a same-padded network. Rejects inputs not divisible
/// by the cumulative pooling factor so pooled labels stay grid-aligned.
inline std::array<int, 3> output_shape(const NetworkSpec& spec, int c, int h,
                                       int w) {
  if (c != spec.input_channels)
    throw std::invalid_argument("output_shape: input has " +
                                std::to_string(c) + " channels, spec expects " +
                                std::to_string(spec.input_channels));
  const GeometryReport rep = receptive_field(spec);  // validates geometry
  const int factor = rep.output_stride;
  if (h % factor != 0 || w % factor != 0)
    throw std::invalid_argument(
        "output_shape: input " + std::to_string(h) + "x" + std::to_string(w) +
        " not divisible by cumulative pooling factor " +
        std::to_string(factor));
  int cur_c = c;
  for (const LayerSpec& l : spec.layers) {
    if (l.kind == LayerKind::Conv) cur_c = l.out_channels;
  }
  return {cur_c, h / factor, w / factor};
}

}  // namespace fcnn
