#pragma once

#include <string>
#include <vector>

#include "xing/attention.hpp"
#include "xing/fusion.hpp"

namespace xing {

enum class Variant { xing, xingpp };

std::string to_string(Variant v);
std::string to_string(FusionMode m);
Variant parse_variant(const std::string& s);
FusionMode parse_fusion_mode(const std::string& s);

constexpr std::size_t kPoseChannels = 18;

struct GeneratorConfig {
  Variant variant = Variant::xingpp;
  std::size_t blocks = 5;     // T
  std::size_t channels = 32;  // c
  std::size_t height = 64;
  std::size_t width = 32;
  FusionConfig fusion{};
  PyramidSpec pyramid{};     // xingpp only
  std::size_t ea_max_reduced = 64;
  std::size_t decoder_width = 0;  // 0 -> channels

  /// Market-1501 scale presets (128x64, c=64, N=10).
  static GeneratorConfig full_xing();
  static GeneratorConfig full_xingpp();

  void validate() const;
  std::size_t code_height() const { return height / 4; }
  std::size_t code_width() const { return width / 4; }
  /// Number of code tensors per stream the fusion consumes.
  std::size_t fused_codes() const { return fusion.mode == FusionMode::dccaf ? blocks + 1 : 1; }

  bool operator==(const GeneratorConfig&) const = default;
};

struct EncoderParams {
  ConvLayer image1, image2;  // 3 -> c -> c, stride 2
  ConvLayer pose1, pose2;    // 36 -> c -> c, stride 2
};

struct GeneratorOutput {
  Tensor image;                          // [b,3,h,w]
  std::vector<Tensor> appearance_codes;  // F_0^I .. F_T^I
  std::vector<Tensor> shape_codes;       // F_0^P .. F_T^P
  std::vector<Tensor> appearance_images; // N
  std::vector<Tensor> shape_images;      // N
  Tensor attention;                      // [b,2N+1,h,w]
  std::vector<CorrelationMap> correlations;
};

class Generator {
 public:
  /// Registers parameters under "gen." in `store`.
  Generator(const GeneratorConfig& config, ParamStore& store, Rng& rng);

  const GeneratorConfig& config() const { return config_; }

  std::pair<Tensor, Tensor> encode(const Bind& bind, const Tensor& source_image,
                                   const Tensor& source_pose, const Tensor& target_pose) const;
  GeneratorOutput forward(const Bind& bind, const Tensor& source_image, const Tensor& source_pose,
                          const Tensor& target_pose) const;

 private:
  GeneratorConfig config_;
  EncoderParams encoder_;
  std::vector<SAParams> sa_;
  std::vector<ASParams> as_;
  std::vector<EMSAParams> emsa_;
  std::vector<EMASParams> emas_;
  DecoderParams app_decoder_, shape_decoder_;
  CoAttentionParams co_attention_;
};

}  // namespace xing
