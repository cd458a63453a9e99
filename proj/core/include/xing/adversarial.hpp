#pragma once

#include <span>
#include <string>
#include <vector>

#include "xing/layers.hpp"

namespace xing {

/// Four stride-2 3x3 convs (64, 128, 256, 256) with leaky_relu(0.2), then a
/// 1x1 conv to one logit channel. Input is the condition concatenated with
/// the image; output is an h/16 x w/16 logit map.
class PatchDiscriminator {
 public:
  PatchDiscriminator() = default;
  PatchDiscriminator(ParamStore& store, const std::string& prefix, std::size_t cond_channels,
                     Rng& rng);

  Tensor forward(const Bind& bind, const Tensor& cond, const Tensor& image) const;
  std::size_t in_channels() const { return in_channels_; }

 private:
  std::size_t in_channels_ = 0;
  std::vector<ConvLayer> convs_;
  ConvLayer score_;
};

struct LossWeights {
  double gan = 5.0;
  double l1 = 50.0;
  double perceptual = 50.0;

  bool operator==(const LossWeights&) const = default;
};

enum class GanLossKind { bce, lsgan };
enum class DiscReduce { mean, sum };

std::string to_string(GanLossKind k);
std::string to_string(DiscReduce r);
GanLossKind parse_gan_loss(const std::string& s);
DiscReduce parse_disc_reduce(const std::string& s);

struct GanOptions {
  GanLossKind kind = GanLossKind::bce;
  DiscReduce reduce = DiscReduce::mean;

  bool operator==(const GanOptions&) const = default;
};

/// Discriminator objective: per discriminator 0.5*(loss(real,1) + loss(fake,0)),
/// reduced over discriminators.
Tensor discriminator_loss(std::span<const Tensor> real_scores, std::span<const Tensor> fake_scores,
                          const GanOptions& opt = {});
/// Generator adversarial objective: loss(fake,1) reduced over discriminators.
Tensor generator_adv_loss(std::span<const Tensor> fake_scores, const GanOptions& opt = {});

struct GanLosses {
  Tensor disc;
  Tensor gen_adv;
};
GanLosses gan_losses(std::span<const Tensor> real_scores, std::span<const Tensor> fake_scores,
                     const GanOptions& opt = {});

Tensor l1_loss(const Tensor& generated, const Tensor& target);

/// Frozen feature network (three stride-2 3x3 convs, fixed seeded weights).
/// A stand-in for pretrained VGG19 taps; never trained.
class PerceptualExtractor {
 public:
  explicit PerceptualExtractor(std::uint64_t seed = 0x5eed'f00dULL);

  std::vector<Tensor> features(const Tensor& image) const;
  const ParamStore& params() const { return store_; }

 private:
  ParamStore store_;
  std::vector<ConvLayer> convs_;
};

/// Sum over taps of mean |phi_k(generated) - phi_k(target)|.
Tensor perceptual_loss(const Tensor& generated, const Tensor& target,
                       const PerceptualExtractor& phi);

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool operator==(const AdamConfig&) const = default;
};

/// Bias-corrected Adam over a fixed parameter list. The caller zeroes gradients.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig config);

  void step();
  void zero_grad();

  const AdamConfig& config() const { return config_; }
  std::uint64_t steps() const { return steps_; }
  const std::vector<Parameter*>& params() const { return params_; }

  // Moment access for checkpoints.
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  void set_steps(std::uint64_t s) { steps_ = s; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t steps_ = 0;
};

/// Single Adam update of `params` from matching `grads`.
void adam_step(std::span<Parameter* const> params, std::span<const std::vector<double>> grads,
               std::vector<std::vector<double>>& m, std::vector<std::vector<double>>& v,
               std::uint64_t& step, const AdamConfig& config);

}  // namespace xing
