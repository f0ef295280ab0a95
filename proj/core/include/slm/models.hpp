#pragma once

#include <array>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "slm/checkpoint.hpp"
#include "slm/image.hpp"
#include "slm/ops.hpp"
#include "slm/rng.hpp"
#include "slm/tensor.hpp"

namespace slm {
namespace models {

/// U-Net: `depth` downsampling blocks (2x [conv3x3+BN+ReLU] then max-pool),
/// dropout in the bottleneck, symmetric decoder with transposed-conv
/// upsampling, skip concatenations and a final 1x1 conv + sigmoid.
struct UNetConfig {
  int in_channels = 1;
  int base_channels = 8;  // 64 reproduces the original full-size network
  int depth = 5;          // original 4 downsampling blocks plus one extra
  double dropout_p = 0.5;
};

struct RegressorConfig {
  UNetConfig encoder;
  int input_height = 64;  // FC head width depends on the image size
  int input_width = 96;
  int fc_nodes = 256;
  int fc_layers = 2;
  int output_dim = 1;
};

/// VGG-19 feature extractor (16 conv layers in 5 stages, each stage closed by
/// a 2x max-pool) with the same FC head as the encoder-regressor.
struct VGGConfig {
  int in_channels = 1;
  int input_height = 64;
  int input_width = 96;
  std::array<int, 5> stage_widths{64, 128, 256, 512, 512};
  std::array<int, 5> stage_convs{2, 2, 4, 4, 4};
  int fc_nodes = 256;
  int fc_layers = 2;
};

/// A built network: named parameters/buffers plus the forward pass.
class Model {
 public:
  virtual ~Model() = default;

  virtual Tensor forward(const Tensor& x, Mode mode, Rng& dropout_rng) = 0;
  /// Encoder/bottleneck activation (flattened latent) where the architecture
  /// has one; used for weight-transfer equality checks.
  virtual Tensor encode(const Tensor& x, Mode mode, Rng& dropout_rng) = 0;

  /// All named tensors: trainable parameters and running-stat buffers.
  virtual std::vector<NamedTensor> named_tensors() = 0;
  virtual std::string arch_tag() const = 0;  // SB | DE | VGG
  virtual std::string config_json() const = 0;

  std::vector<NamedTensor> parameters();  // trainable only
  std::size_t parameter_count();
  /// CSV table: name,shape,param_count per entry.
  void describe_csv(std::ostream& os);

  void save(const std::string& path);
  /// Restores parameter and buffer values by name; shapes must match.
  void load_from(const Checkpoint& ck);
};

std::unique_ptr<Model> build_unet(const UNetConfig& cfg, Rng& init_rng);
std::unique_ptr<Model> build_encoder_regressor(const RegressorConfig& cfg, Rng& init_rng);
std::unique_ptr<Model> build_vgg_regressor(const VGGConfig& cfg, Rng& init_rng);

/// Copies every encoder/bottleneck tensor (parameters and BN buffers) from a
/// trained segmentation U-Net into an encoder-regressor by name. The FC head
/// keeps its fresh initialization; everything stays trainable.
void transfer_encoder_weights(Model& src_unet, Model& dst_regressor);

/// Rebuilds the architecture recorded in a checkpoint's metadata and loads
/// its weights.
std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ck);

/// Eval-mode helpers used by the measurement pipeline. Both normalize the
/// image intensity exactly as training does.
BinaryMask predict_mask(Model& sb_model, const GrayImage& image, double threshold = 0.5);
double predict_length_px(Model& regressor, const GrayImage& image);

}  // namespace models
}  // namespace slm
