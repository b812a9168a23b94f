#ifndef TRAVBEV_NN_HPP
#define TRAVBEV_NN_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <nlohmann/json.hpp>
#include <vector>

namespace travbev {

/// Dense feature map: channels x (height * width), pixel-major columns
/// (column j holds pixel (j / width, j % width)).
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  Eigen::MatrixXd data;

  static Tensor zeros(int channels, int height, int width);
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(height) * width;
  }
  Eigen::Index column(int y, int x) const {
    return static_cast<Eigen::Index>(y) * width + x;
  }
};

/// Network shape description; serialized alongside the weights.
struct NetArch {
  int input_channels = 3;
  int embed_dim = 16;
  std::vector<int> encoder = {8, 12, 16, 24};  // stride-2 3x3 stages
  std::vector<int> decoder = {16, 12, 8, 8};   // upsample + 3x3 stages

  bool operator==(const NetArch&) const = default;
};

nlohmann::json arch_to_json(const NetArch& arch);
NetArch arch_from_json(const nlohmann::json& j);
/// Total float parameter count for the architecture.
std::size_t arch_param_count(const NetArch& arch);

/// Fully convolutional encoder/decoder producing one embedding per input
/// pixel. The final layer normalizes each embedding to unit length; pixels
/// whose raw feature is (near) zero emit a fixed unit vector instead, so
/// the unit-norm contract holds everywhere. Parameters are held in float32
/// so that serialization is lossless; all arithmetic runs in double.
class FeatureNet {
 public:
  explicit FeatureNet(const NetArch& arch);
  FeatureNet(const NetArch& arch, std::uint64_t seed);  // He initialization
  FeatureNet(FeatureNet&&) noexcept;
  FeatureNet& operator=(FeatureNet&&) noexcept;
  ~FeatureNet();

  FeatureNet clone() const;

  /// Embeddings for every pixel; `train` retains backward caches.
  Tensor forward(const Tensor& input, bool train = false);
  /// Backpropagates d(loss)/d(embeddings), accumulating parameter
  /// gradients. Requires a preceding forward(train = true).
  void backward(const Tensor& grad_output);
  void zero_grad();

  const NetArch& arch() const;
  std::size_t param_count() const;
  std::vector<float> parameters() const;
  void set_parameters(const std::vector<float>& params);
  std::vector<double> gradients() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace travbev

#endif  // TRAVBEV_NN_HPP
