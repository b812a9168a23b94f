#include "travbev/nn.hpp"

#include <cmath>
#include <utility>

#include "travbev/errors.hpp"
#include "travbev/rng.hpp"

namespace travbev {

Tensor Tensor::zeros(int channels, int height, int width) {
  Tensor t;
  t.channels = channels;
  t.height = height;
  t.width = width;
  t.data = Eigen::MatrixXd::Zero(channels,
                                 static_cast<Eigen::Index>(height) * width);
  return t;
}

nlohmann::json arch_to_json(const NetArch& arch) {
  return nlohmann::json{{"input_channels", arch.input_channels},
                        {"embed_dim", arch.embed_dim},
                        {"encoder", arch.encoder},
                        {"decoder", arch.decoder}};
}

NetArch arch_from_json(const nlohmann::json& j) {
  NetArch arch;
  try {
    arch.input_channels = j.at("input_channels").get<int>();
    arch.embed_dim = j.at("embed_dim").get<int>();
    arch.encoder = j.at("encoder").get<std::vector<int>>();
    arch.decoder = j.at("decoder").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("network description: ") + e.what());
  }
  if (arch.input_channels < 1 || arch.embed_dim < 1 || arch.encoder.empty() ||
      arch.decoder.size() != arch.encoder.size()) {
    throw ConfigError("network description has inconsistent shapes");
  }
  for (int c : arch.encoder) {
    if (c < 1) throw ConfigError("encoder widths must be positive");
  }
  for (int c : arch.decoder) {
    if (c < 1) throw ConfigError("decoder widths must be positive");
  }
  return arch;
}

namespace {

constexpr double kNormFloor = 1e-8;

struct ConvSpec {
  int in_c, out_c, kernel, stride;
};

// Layer sequence is a fixed chain: encoder stride-2 convs with ReLU,
// decoder nearest-upsample + stride-1 convs with ReLU, then a 1x1 head
// and per-pixel normalization.
std::vector<ConvSpec> conv_plan(const NetArch& arch) {
  std::vector<ConvSpec> plan;
  int in_c = arch.input_channels;
  for (int out_c : arch.encoder) {
    plan.push_back({in_c, out_c, 3, 2});
    in_c = out_c;
  }
  for (int out_c : arch.decoder) {
    plan.push_back({in_c, out_c, 3, 1});
    in_c = out_c;
  }
  plan.push_back({in_c, arch.embed_dim, 1, 1});
  return plan;
}

int conv_out_dim(int in, int kernel, int stride) {
  const int pad = kernel / 2;
  return (in + 2 * pad - kernel) / stride + 1;
}

struct Conv {
  ConvSpec spec;
  // weight(out, in * k * k), flattened row-major into the parameter block.
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
  Eigen::MatrixXd grad_weight;
  Eigen::VectorXd grad_bias;

  // caches
  Eigen::MatrixXd col;  // (in * k * k) x out_pixels
  Eigen::MatrixXd input_cache;  // used by 1x1 convs instead of col
  int in_h = 0, in_w = 0, out_h = 0, out_w = 0;

  void init_storage() {
    const int fan_in = spec.in_c * spec.kernel * spec.kernel;
    weight = Eigen::MatrixXd::Zero(spec.out_c, fan_in);
    bias = Eigen::VectorXd::Zero(spec.out_c);
    grad_weight = Eigen::MatrixXd::Zero(spec.out_c, fan_in);
    grad_bias = Eigen::VectorXd::Zero(spec.out_c);
  }

  std::size_t param_count() const {
    return static_cast<std::size_t>(weight.size()) + bias.size();
  }

  Tensor forward(const Tensor& x, bool train) {
    in_h = x.height;
    in_w = x.width;
    out_h = conv_out_dim(x.height, spec.kernel, spec.stride);
    out_w = conv_out_dim(x.width, spec.kernel, spec.stride);
    Tensor y = Tensor::zeros(spec.out_c, out_h, out_w);
    if (spec.kernel == 1 && spec.stride == 1) {
      y.data.noalias() = weight * x.data;
      if (train) input_cache = x.data;
    } else {
      const int k = spec.kernel;
      const int pad = k / 2;
      Eigen::MatrixXd patches(spec.in_c * k * k,
                              static_cast<Eigen::Index>(out_h) * out_w);
      patches.setZero();
      for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
          const Eigen::Index col_idx =
              static_cast<Eigen::Index>(oy) * out_w + ox;
          double* dst = patches.col(col_idx).data();
          for (int c = 0; c < spec.in_c; ++c) {
            for (int ky = 0; ky < k; ++ky) {
              const int iy = oy * spec.stride - pad + ky;
              for (int kx = 0; kx < k; ++kx) {
                const int ix = ox * spec.stride - pad + kx;
                const double v =
                    (iy >= 0 && iy < in_h && ix >= 0 && ix < in_w)
                        ? x.data(c, static_cast<Eigen::Index>(iy) * in_w + ix)
                        : 0.0;
                dst[(c * k + ky) * k + kx] = v;
              }
            }
          }
        }
      }
      y.data.noalias() = weight * patches;
      if (train) col = std::move(patches);
    }
    y.data.colwise() += bias;
    return y;
  }

  Tensor backward(const Tensor& gy) {
    grad_bias += gy.data.rowwise().sum();
    Tensor gx = Tensor::zeros(spec.in_c, in_h, in_w);
    if (spec.kernel == 1 && spec.stride == 1) {
      grad_weight.noalias() += gy.data * input_cache.transpose();
      gx.data.noalias() = weight.transpose() * gy.data;
      return gx;
    }
    grad_weight.noalias() += gy.data * col.transpose();
    const Eigen::MatrixXd gcol = weight.transpose() * gy.data;
    const int k = spec.kernel;
    const int pad = k / 2;
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox) {
        const Eigen::Index col_idx = static_cast<Eigen::Index>(oy) * out_w + ox;
        const double* src = gcol.col(col_idx).data();
        for (int c = 0; c < spec.in_c; ++c) {
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * spec.stride - pad + ky;
            if (iy < 0 || iy >= in_h) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * spec.stride - pad + kx;
              if (ix < 0 || ix >= in_w) continue;
              gx.data(c, static_cast<Eigen::Index>(iy) * in_w + ix) +=
                  src[(c * k + ky) * k + kx];
            }
          }
        }
      }
    }
    return gx;
  }
};

}  // namespace

struct FeatureNet::Impl {
  NetArch arch;
  std::vector<Conv> convs;

  // per-forward caches
  std::vector<Eigen::ArrayXXd> relu_masks;       // one per conv with ReLU
  std::vector<std::pair<int, int>> stage_sizes;  // encoder output sizes
  std::vector<std::vector<Eigen::Index>> up_maps;
  std::vector<std::pair<int, int>> up_in_sizes;
  Eigen::MatrixXd norm_input;  // head output before normalization
  Eigen::VectorXd norms;
  bool has_cache = false;

  explicit Impl(const NetArch& a) : arch(a) {
    for (const ConvSpec& spec : conv_plan(arch)) {
      Conv conv;
      conv.spec = spec;
      conv.init_storage();
      convs.push_back(std::move(conv));
    }
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const Conv& conv : convs) n += conv.param_count();
    return n;
  }

  static Tensor upsample_nearest(const Tensor& x, int out_h, int out_w,
                                 std::vector<Eigen::Index>* map) {
    Tensor y = Tensor::zeros(x.channels, out_h, out_w);
    if (map) map->resize(static_cast<std::size_t>(out_h) * out_w);
    for (int oy = 0; oy < out_h; ++oy) {
      const int iy = static_cast<int>(
          (static_cast<long long>(oy) * x.height) / out_h);
      for (int ox = 0; ox < out_w; ++ox) {
        const int ix = static_cast<int>(
            (static_cast<long long>(ox) * x.width) / out_w);
        const Eigen::Index src = static_cast<Eigen::Index>(iy) * x.width + ix;
        const Eigen::Index dst = static_cast<Eigen::Index>(oy) * out_w + ox;
        y.data.col(dst) = x.data.col(src);
        if (map) (*map)[static_cast<std::size_t>(dst)] = src;
      }
    }
    return y;
  }

  Tensor forward(const Tensor& input, bool train) {
    if (input.channels != arch.input_channels) {
      throw ConfigError("input channel count does not match the network");
    }
    if (input.height < 1 || input.width < 1 ||
        input.data.rows() != input.channels ||
        input.data.cols() != static_cast<Eigen::Index>(input.pixel_count())) {
      throw ConfigError("malformed input tensor");
    }
    relu_masks.clear();
    stage_sizes.clear();
    up_maps.clear();
    up_in_sizes.clear();
    has_cache = train;

    const std::size_t n_enc = arch.encoder.size();
    std::vector<std::pair<int, int>> sizes;  // input + encoder outputs
    sizes.emplace_back(input.height, input.width);

    Tensor x = input;
    std::size_t conv_idx = 0;
    for (std::size_t i = 0; i < n_enc; ++i) {
      x = convs[conv_idx++].forward(x, train);
      relu_apply(x, train);
      sizes.emplace_back(x.height, x.width);
    }
    stage_sizes = sizes;
    for (std::size_t i = 0; i < arch.decoder.size(); ++i) {
      // Mirror the encoder: up to the size before encoder stage (n_enc - i).
      const auto [th, tw] = sizes[n_enc - 1 - i];
      up_in_sizes.emplace_back(x.height, x.width);
      std::vector<Eigen::Index> map;
      x = upsample_nearest(x, th, tw, train ? &map : nullptr);
      if (train) up_maps.push_back(std::move(map));
      x = convs[conv_idx++].forward(x, train);
      relu_apply(x, train);
    }
    x = convs[conv_idx++].forward(x, train);  // 1x1 head

    // Per-pixel normalization. Columns below the norm floor (dead ReLU
    // paths) take a fixed unit vector so every embedding is unit length.
    Eigen::VectorXd col_norms = x.data.colwise().norm();
    if (train) norm_input = x.data;
    for (Eigen::Index j = 0; j < x.data.cols(); ++j) {
      if (col_norms[j] > kNormFloor) {
        x.data.col(j) /= col_norms[j];
      } else {
        x.data.col(j).setZero();
        x.data(0, j) = 1.0;
      }
    }
    if (train) norms = std::move(col_norms);
    return x;
  }

  void relu_apply(Tensor& x, bool train) {
    if (train) {
      relu_masks.push_back((x.data.array() > 0.0).cast<double>());
    }
    x.data = x.data.cwiseMax(0.0);
  }

  void backward(const Tensor& grad_output) {
    if (!has_cache) {
      throw ConfigError("backward requires a training-mode forward pass");
    }
    // Normalization backward: dx = (g - y (y . g)) / |x|; columns under
    // the floor emitted a constant, so they pass no gradient.
    Eigen::MatrixXd g = grad_output.data;
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      const double n = norms[j];
      if (n > kNormFloor) {
        const Eigen::VectorXd y = norm_input.col(j) / n;
        g.col(j) = (g.col(j) - y * y.dot(g.col(j))) / n;
      } else {
        g.col(j).setZero();
      }
    }

    const std::size_t n_enc = arch.encoder.size();
    std::size_t conv_idx = convs.size() - 1;
    std::size_t relu_idx = relu_masks.size();

    Tensor gt;
    gt.channels = arch.embed_dim;
    gt.height = grad_output.height;
    gt.width = grad_output.width;
    gt.data = std::move(g);
    gt = convs[conv_idx--].backward(gt);  // 1x1 head

    for (std::size_t i = arch.decoder.size(); i-- > 0;) {
      gt.data.array() *= relu_masks[--relu_idx];
      gt = convs[conv_idx--].backward(gt);
      // Undo the upsample: scatter-add output gradients onto sources.
      const auto [ih, iw] = up_in_sizes[i];
      Tensor acc = Tensor::zeros(gt.channels, ih, iw);
      const auto& map = up_maps[i];
      for (std::size_t dst = 0; dst < map.size(); ++dst) {
        acc.data.col(map[dst]) += gt.data.col(static_cast<Eigen::Index>(dst));
      }
      gt = std::move(acc);
    }
    for (std::size_t i = n_enc; i-- > 0;) {
      gt.data.array() *= relu_masks[--relu_idx];
      gt = convs[conv_idx].backward(gt);
      if (conv_idx > 0) --conv_idx;
    }
    has_cache = false;
  }
};

std::size_t arch_param_count(const NetArch& arch) {
  std::size_t n = 0;
  for (const ConvSpec& spec : conv_plan(arch)) {
    n += static_cast<std::size_t>(spec.out_c) *
             (spec.in_c * spec.kernel * spec.kernel) +
         spec.out_c;
  }
  return n;
}

FeatureNet::FeatureNet(const NetArch& arch)
    : impl_(std::make_unique<Impl>(arch)) {}

FeatureNet::FeatureNet(const NetArch& arch, std::uint64_t seed)
    : impl_(std::make_unique<Impl>(arch)) {
  Rng rng(seed);
  for (Conv& conv : impl_->convs) {
    const double fan_in = static_cast<double>(conv.weight.cols());
    const double stddev = std::sqrt(2.0 / fan_in);
    for (Eigen::Index r = 0; r < conv.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < conv.weight.cols(); ++c) {
        // Drawn at float precision so the stored parameters are exact.
        conv.weight(r, c) =
            static_cast<float>(rng.gaussian() * stddev);
      }
    }
    conv.bias.setZero();
  }
}

FeatureNet::FeatureNet(FeatureNet&&) noexcept = default;
FeatureNet& FeatureNet::operator=(FeatureNet&&) noexcept = default;
FeatureNet::~FeatureNet() = default;

FeatureNet FeatureNet::clone() const {
  FeatureNet copy(impl_->arch);
  copy.set_parameters(parameters());
  return copy;
}

Tensor FeatureNet::forward(const Tensor& input, bool train) {
  return impl_->forward(input, train);
}

void FeatureNet::backward(const Tensor& grad_output) {
  impl_->backward(grad_output);
}

void FeatureNet::zero_grad() {
  for (Conv& conv : impl_->convs) {
    conv.grad_weight.setZero();
    conv.grad_bias.setZero();
  }
}

const NetArch& FeatureNet::arch() const { return impl_->arch; }

std::size_t FeatureNet::param_count() const { return impl_->param_count(); }

std::vector<float> FeatureNet::parameters() const {
  std::vector<float> out;
  out.reserve(param_count());
  for (const Conv& conv : impl_->convs) {
    for (Eigen::Index r = 0; r < conv.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < conv.weight.cols(); ++c) {
        out.push_back(static_cast<float>(conv.weight(r, c)));
      }
    }
    for (Eigen::Index i = 0; i < conv.bias.size(); ++i) {
      out.push_back(static_cast<float>(conv.bias[i]));
    }
  }
  return out;
}

void FeatureNet::set_parameters(const std::vector<float>& params) {
  if (params.size() != param_count()) {
    throw ConfigError("parameter vector size does not match the network");
  }
  std::size_t idx = 0;
  for (Conv& conv : impl_->convs) {
    for (Eigen::Index r = 0; r < conv.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < conv.weight.cols(); ++c) {
        conv.weight(r, c) = params[idx++];
      }
    }
    for (Eigen::Index i = 0; i < conv.bias.size(); ++i) {
      conv.bias[i] = params[idx++];
    }
  }
}

std::vector<double> FeatureNet::gradients() const {
  std::vector<double> out;
  out.reserve(param_count());
  for (const Conv& conv : impl_->convs) {
    for (Eigen::Index r = 0; r < conv.grad_weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < conv.grad_weight.cols(); ++c) {
        out.push_back(conv.grad_weight(r, c));
      }
    }
    for (Eigen::Index i = 0; i < conv.grad_bias.size(); ++i) {
      out.push_back(conv.grad_bias[i]);
    }
  }
  return out;
}

}  // namespace travbev
