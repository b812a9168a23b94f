#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <vector>

#include "travbev/checkpoint.hpp"
#include "travbev/errors.hpp"
#include "travbev/nn.hpp"
#include "travbev/rng.hpp"

using namespace travbev;

namespace {

Tensor random_input(Rng& rng, int c, int h, int w) {
  Tensor t = Tensor::zeros(c, h, w);
  for (Eigen::Index i = 0; i < t.data.size(); ++i) {
    t.data.data()[i] = rng.uniform(-1.0, 1.0);
  }
  return t;
}

// Plain-loop reference of the whole network, sharing only the parameter
// vector with the implementation under test.
struct NaiveNet {
  NetArch arch;
  struct NaiveConv {
    int in_c, out_c, k, stride;
    std::vector<double> w;  // [(o * in_c + c) * k * k + ky * k + kx]
    std::vector<double> b;
  };
  std::vector<NaiveConv> convs;

  NaiveNet(const NetArch& a, const std::vector<float>& params) : arch(a) {
    std::size_t idx = 0;
    auto take = [&](int in_c, int out_c, int k, int stride) {
      NaiveConv conv{in_c, out_c, k, stride, {}, {}};
      conv.w.resize(static_cast<std::size_t>(out_c) * in_c * k * k);
      conv.b.resize(out_c);
      for (double& v : conv.w) v = params[idx++];
      for (double& v : conv.b) v = params[idx++];
      convs.push_back(std::move(conv));
    };
    int in_c = arch.input_channels;
    for (int out_c : arch.encoder) {
      take(in_c, out_c, 3, 2);
      in_c = out_c;
    }
    for (int out_c : arch.decoder) {
      take(in_c, out_c, 3, 1);
      in_c = out_c;
    }
    take(in_c, arch.embed_dim, 1, 1);
    REQUIRE(idx == params.size());
  }

  static Tensor conv_apply(const NaiveConv& conv, const Tensor& x) {
    const int pad = conv.k / 2;
    const int out_h = (x.height + 2 * pad - conv.k) / conv.stride + 1;
    const int out_w = (x.width + 2 * pad - conv.k) / conv.stride + 1;
    Tensor y = Tensor::zeros(conv.out_c, out_h, out_w);
    for (int o = 0; o < conv.out_c; ++o) {
      for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
          double sum = conv.b[o];
          for (int c = 0; c < conv.in_c; ++c) {
            for (int ky = 0; ky < conv.k; ++ky) {
              for (int kx = 0; kx < conv.k; ++kx) {
                const int iy = oy * conv.stride - pad + ky;
                const int ix = ox * conv.stride - pad + kx;
                if (iy < 0 || iy >= x.height || ix < 0 || ix >= x.width) {
                  continue;
                }
                sum += conv.w[((static_cast<std::size_t>(o) * conv.in_c + c) *
                                   conv.k +
                               ky) *
                                  conv.k +
                              kx] *
                       x.data(c, static_cast<Eigen::Index>(iy) * x.width + ix);
              }
            }
          }
          y.data(o, static_cast<Eigen::Index>(oy) * out_w + ox) = sum;
        }
      }
    }
    return y;
  }

  static void relu(Tensor& x) { x.data = x.data.cwiseMax(0.0); }

  static Tensor upsample(const Tensor& x, int out_h, int out_w) {
    Tensor y = Tensor::zeros(x.channels, out_h, out_w);
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox) {
        const int iy = static_cast<int>(
            (static_cast<long long>(oy) * x.height) / out_h);
        const int ix =
            static_cast<int>((static_cast<long long>(ox) * x.width) / out_w);
        y.data.col(static_cast<Eigen::Index>(oy) * out_w + ox) =
            x.data.col(static_cast<Eigen::Index>(iy) * x.width + ix);
      }
    }
    return y;
  }

  Tensor forward(const Tensor& input) const {
    std::vector<std::pair<int, int>> sizes = {{input.height, input.width}};
    Tensor x = input;
    std::size_t ci = 0;
    for (std::size_t i = 0; i < arch.encoder.size(); ++i) {
      x = conv_apply(convs[ci++], x);
      relu(x);
      sizes.emplace_back(x.height, x.width);
    }
    for (std::size_t i = 0; i < arch.decoder.size(); ++i) {
      const auto [th, tw] = sizes[arch.encoder.size() - 1 - i];
      x = upsample(x, th, tw);
      x = conv_apply(convs[ci++], x);
      relu(x);
    }
    x = conv_apply(convs[ci++], x);
    for (Eigen::Index j = 0; j < x.data.cols(); ++j) {
      const double n = x.data.col(j).norm();
      if (n > 1e-8) {
        x.data.col(j) /= n;
      } else {
        x.data.col(j).setZero();
        x.data(0, j) = 1.0;
      }
    }
    return x;
  }
};

NetArch tiny_arch() {
  NetArch arch;
  arch.input_channels = 2;
  arch.embed_dim = 3;
  arch.encoder = {4, 5};
  arch.decoder = {4, 3};
  return arch;
}

}  // namespace

TEST_CASE("forward produces one unit embedding per pixel") {
  FeatureNet net(NetArch{}, 7);
  Rng rng(1);
  const Tensor input = random_input(rng, 3, 40, 56);
  const Tensor out = net.forward(input);
  CHECK(out.channels == 16);
  CHECK(out.height == 40);
  CHECK(out.width == 56);
  for (Eigen::Index j = 0; j < out.data.cols(); ++j) {
    CHECK(out.data.col(j).norm() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("an all-zero frame still yields unit embeddings") {
  FeatureNet net(NetArch{}, 7);  // biases start at zero: dead everywhere
  const Tensor input = Tensor::zeros(3, 32, 32);
  const Tensor out = net.forward(input);
  for (Eigen::Index j = 0; j < out.data.cols(); ++j) {
    CHECK(out.data(0, j) == 1.0);
    CHECK(out.data.col(j).norm() == 1.0);
  }
}

TEST_CASE("initialization is seed-deterministic") {
  FeatureNet a(NetArch{}, 42);
  FeatureNet b(NetArch{}, 42);
  FeatureNet c(NetArch{}, 43);
  CHECK(a.parameters() == b.parameters());
  CHECK(a.parameters() != c.parameters());
  CHECK(a.param_count() == 13136);
  CHECK(arch_param_count(NetArch{}) == 13136);
}

TEST_CASE("parameters round-trip through the accessors") {
  FeatureNet net(tiny_arch(), 5);
  std::vector<float> params = net.parameters();
  REQUIRE(params.size() == arch_param_count(tiny_arch()));
  for (auto& p : params) p += 0.125F;
  net.set_parameters(params);
  CHECK(net.parameters() == params);

  params.pop_back();
  CHECK_THROWS_AS(net.set_parameters(params), ConfigError);
}

TEST_CASE("forward matches a plain-loop reference") {
  for (std::uint64_t seed : {11ULL, 12ULL}) {
    FeatureNet net(tiny_arch(), seed);
    const NaiveNet reference(tiny_arch(), net.parameters());
    Rng rng(seed + 100);
    const Tensor input = random_input(rng, 2, 9, 11);  // odd sizes on purpose
    const Tensor fast = net.forward(input);
    const Tensor slow = reference.forward(input);
    REQUIRE(fast.data.rows() == slow.data.rows());
    REQUIRE(fast.data.cols() == slow.data.cols());
    CHECK((fast.data - slow.data).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("default architecture matches the reference too") {
  FeatureNet net(NetArch{}, 3);
  const NaiveNet reference(NetArch{}, net.parameters());
  Rng rng(33);
  const Tensor input = random_input(rng, 3, 24, 18);
  const Tensor fast = net.forward(input);
  const Tensor slow = reference.forward(input);
  CHECK((fast.data - slow.data).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("analytic gradients agree with finite differences") {
  const NetArch arch = tiny_arch();
  FeatureNet net(arch, 21);
  Rng rng(900);
  const Tensor input = random_input(rng, 2, 9, 11);

  // Scalar loss: a fixed random linear functional of the embeddings.
  Tensor probe = random_input(rng, arch.embed_dim, 9, 11);
  auto loss_of = [&](FeatureNet& n) {
    const Tensor out = n.forward(input);
    return (out.data.array() * probe.data.array()).sum();
  };

  net.zero_grad();
  net.forward(input, /*train=*/true);
  net.backward(probe);
  const std::vector<double> grad = net.gradients();

  std::vector<float> params = net.parameters();
  Rng pick(901);
  const auto subset = pick.sample_without_replacement(params.size(), 60);
  const double h = 1e-4;
  for (const std::size_t i : subset) {
    const float saved = params[i];
    // Parameters live in float storage; measure the step actually taken.
    params[i] = static_cast<float>(saved + h);
    const double upper = params[i];
    net.set_parameters(params);
    const double up = loss_of(net);
    params[i] = static_cast<float>(saved - h);
    const double lower = params[i];
    net.set_parameters(params);
    const double down = loss_of(net);
    params[i] = saved;
    const double fd = (up - down) / (upper - lower);
    const double scale = std::max({1.0, std::abs(fd), std::abs(grad[i])});
    CHECK(std::abs(fd - grad[i]) / scale < 5e-5);
  }
  net.set_parameters(params);
}

TEST_CASE("gradients accumulate until cleared") {
  FeatureNet net(tiny_arch(), 8);
  Rng rng(80);
  const Tensor input = random_input(rng, 2, 8, 8);
  Tensor probe = random_input(rng, 3, 8, 8);

  net.zero_grad();
  net.forward(input, true);
  net.backward(probe);
  const std::vector<double> once = net.gradients();
  net.forward(input, true);
  net.backward(probe);
  const std::vector<double> twice = net.gradients();
  for (std::size_t i = 0; i < once.size(); ++i) {
    CHECK(twice[i] == doctest::Approx(2.0 * once[i]).epsilon(1e-12));
  }
  net.zero_grad();
  for (double g : net.gradients()) CHECK(g == 0.0);
}

TEST_CASE("the embedding field is translation covariant") {
  FeatureNet net(NetArch{}, 77);
  Rng rng(770);
  const int size = 128, shift = 16;  // shift by the total encoder stride
  const Tensor base = random_input(rng, 3, size, size);
  Tensor moved = Tensor::zeros(3, size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      moved.data.col(moved.column(y, x)) = base.data.col(
          base.column((y + size - shift) % size, (x + size - shift) % size));
    }
  }
  const Tensor out_base = net.forward(base);
  const Tensor out_moved = net.forward(moved);

  // Compare away from the borders: the network sees zero padding there,
  // and each embedding depends on a receptive field about 61 px wide.
  const int margin = 48;
  double max_diff = 0.0;
  for (int y = margin; y < size - margin - shift; ++y) {
    for (int x = margin; x < size - margin - shift; ++x) {
      max_diff = std::max(
          max_diff,
          (out_moved.data.col(out_moved.column(y + shift, x + shift)) -
           out_base.data.col(out_base.column(y, x)))
              .cwiseAbs()
              .maxCoeff());
    }
  }
  CHECK(max_diff < 1e-12);
}

TEST_CASE("forward validates its input") {
  FeatureNet net(tiny_arch(), 1);
  CHECK_THROWS_AS(net.forward(Tensor::zeros(3, 8, 8)), ConfigError);
  Rng rng(2);
  CHECK_THROWS_AS(net.backward(random_input(rng, 3, 8, 8)), ConfigError);
}

TEST_CASE("model files round-trip bit-exactly") {
  const auto dir = std::filesystem::temp_directory_path() / "travbev_ckpt";
  std::filesystem::create_directories(dir);
  const auto path = dir / "model.tbv";

  FeatureNet net(NetArch{}, 99);
  Checkpoint saved = Checkpoint::from_net(net, {{"trained_epochs", 12}});
  save_checkpoint(path, saved);
  const Checkpoint loaded = load_checkpoint(path);

  CHECK(loaded.arch == net.arch());
  CHECK(loaded.parameters == saved.parameters);
  CHECK(loaded.extra.at("trained_epochs") == 12);

  // Identical parameters must give identical embeddings, bit for bit.
  FeatureNet revived = loaded.to_net();
  Rng rng(990);
  const Tensor input = random_input(rng, 3, 20, 20);
  const Tensor a = net.forward(input);
  const Tensor b = revived.forward(input);
  CHECK(a.data == b.data);
}

TEST_CASE("model loader rejects damaged files") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "travbev_ckpt";
  fs::create_directories(dir);
  const auto good = dir / "good.tbv";
  FeatureNet net(tiny_arch(), 4);
  save_checkpoint(good, Checkpoint::from_net(net));

  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint(dir / "absent.tbv"), IoError);
  }
  SUBCASE("bad magic") {
    const auto path = dir / "magic.tbv";
    fs::copy_file(good, path, fs::copy_options::overwrite_existing);
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XXXXXXXX", 8);
    f.close();
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
  }
  SUBCASE("flipped payload byte fails the checksum") {
    const auto path = dir / "flip.tbv";
    fs::copy_file(good, path, fs::copy_options::overwrite_existing);
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(20);
    char c = 0;
    f.read(&c, 1);
    f.seekp(20);
    c = static_cast<char>(c ^ 0x40);
    f.write(&c, 1);
    f.close();
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
  }
  SUBCASE("truncation") {
    const auto path = dir / "short.tbv";
    std::ofstream out(path, std::ios::binary);
    out.write("TRAVBEV1", 8);
    out.close();
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
  }
  SUBCASE("parameter count mismatch is refused at save time") {
    Checkpoint bad = Checkpoint::from_net(net);
    bad.parameters.pop_back();
    CHECK_THROWS_AS(save_checkpoint(dir / "bad.tbv", bad), CheckpointError);
  }
  SUBCASE("non-finite parameters are refused at load time") {
    Checkpoint bad = Checkpoint::from_net(net);
    bad.parameters[5] = std::numeric_limits<float>::quiet_NaN();
    const auto path = dir / "nan.tbv";
    save_checkpoint(path, bad);
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
  }
}
