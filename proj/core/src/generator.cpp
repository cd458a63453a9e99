#include "xing/generator.hpp"

namespace xing {

std::string to_string(Variant v) { return v == Variant::xing ? "xing" : "xingpp"; }

std::string to_string(FusionMode m) { return m == FusionMode::dccaf ? "dccaf" : "caf"; }

Variant parse_variant(const std::string& s) {
  if (s == "xing") return Variant::xing;
  if (s == "xingpp") return Variant::xingpp;
  throw ContractError("unknown generator variant '" + s + "' (expected xing|xingpp)");
}

FusionMode parse_fusion_mode(const std::string& s) {
  if (s == "dccaf") return FusionMode::dccaf;
  if (s == "caf") return FusionMode::caf;
  throw ContractError("unknown fusion mode '" + s + "' (expected dccaf|caf)");
}

GeneratorConfig GeneratorConfig::full_xing() {
  GeneratorConfig c;
  c.variant = Variant::xing;
  c.blocks = 9;
  c.channels = 64;
  c.height = 128;
  c.width = 64;
  c.fusion = {10, FusionMode::caf};
  return c;
}

GeneratorConfig GeneratorConfig::full_xingpp() {
  GeneratorConfig c;
  c.variant = Variant::xingpp;
  c.blocks = 5;
  c.channels = 64;
  c.height = 128;
  c.width = 64;
  c.fusion = {10, FusionMode::dccaf};
  return c;
}

void GeneratorConfig::validate() const {
  if (blocks < 1) throw ContractError("generator: blocks (T) must be >= 1");
  if (channels < 1) throw ContractError("generator: channels must be >= 1");
  if (fusion.intermediates < 1) throw ContractError("generator: intermediates (N) must be >= 1");
  if (height < 4 || width < 4 || height % 4 != 0 || width % 4 != 0) {
    throw ShapeError("generator: image size " + std::to_string(height) + "x" +
                     std::to_string(width) + " must be divisible by 4");
  }
  if (ea_max_reduced < 1) throw ContractError("generator: ea_max_reduced must be >= 1");
  if (variant == Variant::xingpp) pyramid.validate();
}

Generator::Generator(const GeneratorConfig& config, ParamStore& store, Rng& rng) : config_(config) {
  config_.validate();
  const std::size_t c = config_.channels;
  const std::size_t ch = config_.code_height(), cw = config_.code_width();
  encoder_.image1 = make_conv(store, "gen.enc_image.conv1", 3, c, 3, 2, true, rng);
  encoder_.image2 = make_conv(store, "gen.enc_image.conv2", c, c, 3, 2, true, rng);
  encoder_.pose1 = make_conv(store, "gen.enc_pose.conv1", 2 * kPoseChannels, c, 3, 2, true, rng);
  encoder_.pose2 = make_conv(store, "gen.enc_pose.conv2", c, c, 3, 2, true, rng);

  for (std::size_t t = 0; t < config_.blocks; ++t) {
    const std::string prefix = "gen.block" + std::to_string(t + 1);
    if (config_.variant == Variant::xing) {
      sa_.push_back(make_sa(store, prefix + ".sa", c, rng));
      as_.push_back(make_as(store, prefix + ".as", c, rng));
    } else {
      emsa_.push_back(make_emsa(store, prefix + ".emsa", c, ch, cw, config_.pyramid,
                                config_.ea_max_reduced, rng));
      emas_.push_back(make_emas(store, prefix + ".emas", c, ch, cw, config_.pyramid,
                                config_.ea_max_reduced, rng));
    }
  }

  const std::size_t codes = config_.fused_codes();
  const std::size_t dw = config_.decoder_width ? config_.decoder_width : c;
  const std::size_t n = config_.fusion.intermediates;
  app_decoder_ = make_decoder(store, "gen.dec_appearance", codes * c, dw, n, rng);
  shape_decoder_ = make_decoder(store, "gen.dec_shape", codes * c, dw, n, rng);
  co_attention_ = make_co_attention(store, "gen.co_attention", 2 * codes * c, n, rng);
}

std::pair<Tensor, Tensor> Generator::encode(const Bind& bind, const Tensor& source_image,
                                            const Tensor& source_pose,
                                            const Tensor& target_pose) const {
  const auto& cfg = config_;
  auto check = [&](const Tensor& t, std::size_t channels, const char* what) {
    if (t.rank() != 4 || t.dim(1) != channels || t.dim(2) != cfg.height || t.dim(3) != cfg.width ||
        t.dim(0) != source_image.dim(0)) {
      throw ShapeError(std::string("encode: ") + what + " has shape " + to_string(t.shape()) +
                       ", expected [b," + std::to_string(channels) + "," +
                       std::to_string(cfg.height) + "," + std::to_string(cfg.width) + "]");
    }
  };
  if (source_image.rank() != 4) throw ShapeError("encode: source image must be [b,3,h,w]");
  check(source_image, 3, "source image");
  check(source_pose, kPoseChannels, "source pose");
  check(target_pose, kPoseChannels, "target pose");

  Tensor f_i = leaky_relu(encoder_.image1(bind, source_image), 0.2);
  f_i = leaky_relu(encoder_.image2(bind, f_i), 0.2);
  Tensor f_p = leaky_relu(encoder_.pose1(bind, concat({source_pose, target_pose}, 1)), 0.2);
  f_p = leaky_relu(encoder_.pose2(bind, f_p), 0.2);
  return {f_i, f_p};
}

GeneratorOutput Generator::forward(const Bind& bind, const Tensor& source_image,
                                   const Tensor& source_pose, const Tensor& target_pose) const {
  GeneratorOutput out;
  auto [f_i, f_p] = encode(bind, source_image, source_pose, target_pose);
  out.appearance_codes.push_back(f_i);
  out.shape_codes.push_back(f_p);

  for (std::size_t t = 0; t < config_.blocks; ++t) {
    const Tensor& prev_i = out.appearance_codes.back();
    const Tensor& prev_p = out.shape_codes.back();
    BlockResult appearance, shape;
    if (config_.variant == Variant::xing) {
      appearance = sa_forward(bind, prev_i, prev_p, sa_[t]);
      shape = as_forward(bind, prev_p, prev_i, appearance.out, as_[t]);
    } else {
      appearance = emsa_forward(bind, prev_i, prev_p, emsa_[t]);
      shape = emas_forward(bind, prev_p, prev_i, appearance.out, emas_[t]);
    }
    for (auto& c : appearance.correlations) out.correlations.push_back(std::move(c));
    for (auto& c : shape.correlations) out.correlations.push_back(std::move(c));
    out.appearance_codes.push_back(appearance.out);
    out.shape_codes.push_back(shape.out);
  }

  std::vector<Tensor> codes_i, codes_p;
  if (config_.fusion.mode == FusionMode::dccaf) {
    codes_i = out.appearance_codes;
    codes_p = out.shape_codes;
  } else {
    codes_i = {out.appearance_codes.back()};
    codes_p = {out.shape_codes.back()};
  }
  out.appearance_images = decode_intermediates(bind, codes_i, app_decoder_);
  out.shape_images = decode_intermediates(bind, codes_p, shape_decoder_);
  out.attention = co_attention(bind, codes_i, codes_p, co_attention_, config_.height, config_.width);
  out.image = compose(out.appearance_images, out.shape_images, source_image, out.attention);
  return out;
}

}  // namespace xing
