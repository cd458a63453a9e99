#include "xing/adversarial.hpp"

#include <cmath>

namespace xing {

PatchDiscriminator::PatchDiscriminator(ParamStore& store, const std::string& prefix,
                                       std::size_t cond_channels, Rng& rng)
    : in_channels_(cond_channels + 3) {
  const std::size_t widths[] = {64, 128, 256, 256};
  std::size_t in = in_channels_;
  for (std::size_t i = 0; i < 4; ++i) {
    convs_.push_back(
        make_conv(store, prefix + ".conv" + std::to_string(i + 1), in, widths[i], 3, 2, true, rng));
    in = widths[i];
  }
  score_ = make_conv(store, prefix + ".score", in, 1, 1, 1, true, rng);
}

Tensor PatchDiscriminator::forward(const Bind& bind, const Tensor& cond, const Tensor& image) const {
  if (cond.rank() != 4 || image.rank() != 4 || cond.dim(1) + image.dim(1) != in_channels_ ||
      image.dim(1) != 3) {
    throw ShapeError("discriminator expects " + std::to_string(in_channels_) +
                     " input channels (condition + RGB), got " + to_string(cond.shape()) + " and " +
                     to_string(image.shape()));
  }
  Tensor x = concat({cond, image}, 1);
  for (const auto& conv : convs_) x = leaky_relu(conv(bind, x), 0.2);
  return score_(bind, x);
}

std::string to_string(GanLossKind k) { return k == GanLossKind::bce ? "bce" : "lsgan"; }
std::string to_string(DiscReduce r) { return r == DiscReduce::mean ? "mean" : "sum"; }

GanLossKind parse_gan_loss(const std::string& s) {
  if (s == "bce") return GanLossKind::bce;
  if (s == "lsgan") return GanLossKind::lsgan;
  throw ContractError("unknown gan loss '" + s + "' (expected bce|lsgan)");
}

DiscReduce parse_disc_reduce(const std::string& s) {
  if (s == "mean") return DiscReduce::mean;
  if (s == "sum") return DiscReduce::sum;
  throw ContractError("unknown discriminator reduction '" + s + "' (expected mean|sum)");
}

namespace {

Tensor score_loss(const Tensor& scores, double target, GanLossKind kind) {
  if (kind == GanLossKind::bce) return bce_with_logits(scores, target);
  return mean(square(add_scalar(scores, -target)));
}

Tensor reduce(std::vector<Tensor> terms, DiscReduce r) {
  Tensor total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
  if (r == DiscReduce::mean && terms.size() > 1) {
    total = mul_scalar(total, 1.0 / static_cast<double>(terms.size()));
  }
  return total;
}

}  // namespace

Tensor discriminator_loss(std::span<const Tensor> real_scores, std::span<const Tensor> fake_scores,
                          const GanOptions& opt) {
  if (real_scores.empty() || real_scores.size() != fake_scores.size()) {
    throw ContractError("discriminator_loss: need matching real/fake score lists");
  }
  std::vector<Tensor> terms;
  for (std::size_t i = 0; i < real_scores.size(); ++i) {
    if (real_scores[i].shape() != fake_scores[i].shape()) {
      throw ShapeError("discriminator_loss: real/fake logits shapes differ");
    }
    terms.push_back(mul_scalar(add(score_loss(real_scores[i], 1.0, opt.kind),
                                   score_loss(fake_scores[i], 0.0, opt.kind)),
                               0.5));
  }
  return reduce(std::move(terms), opt.reduce);
}

Tensor generator_adv_loss(std::span<const Tensor> fake_scores, const GanOptions& opt) {
  if (fake_scores.empty()) throw ContractError("generator_adv_loss: empty score list");
  std::vector<Tensor> terms;
  for (const auto& s : fake_scores) terms.push_back(score_loss(s, 1.0, opt.kind));
  return reduce(std::move(terms), opt.reduce);
}

GanLosses gan_losses(std::span<const Tensor> real_scores, std::span<const Tensor> fake_scores,
                     const GanOptions& opt) {
  return {discriminator_loss(real_scores, fake_scores, opt), generator_adv_loss(fake_scores, opt)};
}

Tensor l1_loss(const Tensor& generated, const Tensor& target) {
  if (generated.shape() != target.shape()) {
    throw ShapeError("l1_loss: shapes " + to_string(generated.shape()) + " and " +
                     to_string(target.shape()) + " differ");
  }
  return mean(abs(sub(generated, target)));
}

PerceptualExtractor::PerceptualExtractor(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t widths[] = {16, 32, 64};
  std::size_t in = 3;
  for (std::size_t i = 0; i < 3; ++i) {
    convs_.push_back(make_conv(store_, "phi.conv" + std::to_string(i + 1), in, widths[i], 3, 2,
                               true, rng));
    in = widths[i];
  }
}

std::vector<Tensor> PerceptualExtractor::features(const Tensor& image) const {
  const Bind frozen = Bind::frozen();
  std::vector<Tensor> taps;
  Tensor x = image;
  for (const auto& conv : convs_) {
    x = leaky_relu(conv(frozen, x), 0.2);
    taps.push_back(x);
  }
  return taps;
}

Tensor perceptual_loss(const Tensor& generated, const Tensor& target,
                       const PerceptualExtractor& phi) {
  if (generated.shape() != target.shape()) {
    throw ShapeError("perceptual_loss: shapes " + to_string(generated.shape()) + " and " +
                     to_string(target.shape()) + " differ");
  }
  const auto fg = phi.features(generated);
  const auto ft = phi.features(target.detach());
  Tensor total;
  for (std::size_t k = 0; k < fg.size(); ++k) {
    const Tensor term = mean(abs(sub(fg[k], ft[k])));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

void adam_step(std::span<Parameter* const> params, std::span<const std::vector<double>> grads,
               std::vector<std::vector<double>>& m, std::vector<std::vector<double>>& v,
               std::uint64_t& step, const AdamConfig& config) {
  if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size()) {
    throw ContractError("adam_step: parameter, gradient and moment counts differ");
  }
  ++step;
  const double t = static_cast<double>(step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    const auto& g = grads[k];
    if (g.size() != p.value.numel() || m[k].size() != g.size() || v[k].size() != g.size()) {
      throw ContractError("adam_step: shape mismatch for parameter " + p.name);
    }
    std::vector<double> next(p.value.data().begin(), p.value.data().end());
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[k][i] = config.beta1 * m[k][i] + (1.0 - config.beta1) * g[i];
      v[k][i] = config.beta2 * v[k][i] + (1.0 - config.beta2) * g[i] * g[i];
      const double mh = m[k][i] / c1;
      const double vh = v[k][i] / c2;
      next[i] -= config.lr * mh / (std::sqrt(vh) + config.eps);
    }
    p.assign(std::move(next));
  }
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (const Parameter* p : params_) {
    m_.emplace_back(p->value.numel(), 0.0);
    v_.emplace_back(p->value.numel(), 0.0);
  }
}

void Adam::step() {
  std::vector<std::vector<double>> grads;
  grads.reserve(params_.size());
  for (const Parameter* p : params_) grads.push_back(p->grad);
  adam_step(params_, grads, m_, v_, steps_, config_);
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

}  // namespace xing
