#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "xing/adversarial.hpp"
#include "xing/config.hpp"
#include "xing/generator.hpp"
#include "xing/pose.hpp"

namespace xing {

struct LossReport {
  std::uint64_t step = 0;
  double loss_d = 0;
  double loss_g_adv = 0;
  double loss_l1 = 0;
  double loss_p = 0;
  double loss_g = 0;  // weighted generator objective
};

struct HoldoutScore {
  double generated = 0;  // mean SSIM(I_t', I_t)
  double baseline = 0;   // mean SSIM(I_s, I_t)
};

/// Generator, both discriminators, the frozen perceptual network and the two
/// Adam states. Parameters live in one store under "gen.", "d_i." and "d_p.".
class Trainer {
 public:
  explicit Trainer(const RunConfig& cfg);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  const RunConfig& config() const { return cfg_; }
  const Generator& generator() const { return *gen_; }
  const PatchDiscriminator& disc_image() const { return d_i_; }
  const PatchDiscriminator& disc_pose() const { return d_p_; }
  const PerceptualExtractor& perceptual() const { return phi_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  std::uint64_t steps_done() const { return steps_; }

  /// One discriminator update on detached fakes, then one generator update
  /// against the updated (frozen) discriminators.
  LossReport train_step(const pose::Batch& batch);
  /// Same losses without any update.
  LossReport evaluate_losses(const pose::Batch& batch) const;

  /// Weighted generator objective; the discriminators are always frozen.
  Tensor generator_objective(const Bind& gen_bind, const pose::Batch& batch,
                             LossReport* report = nullptr) const;
  /// Scores real pairs and `fake` with both discriminators bound by `disc_bind`.
  Tensor discriminator_objective(const Bind& disc_bind, const pose::Batch& batch,
                                 const Tensor& fake) const;

  GeneratorOutput generate(const pose::Batch& batch) const;
  HoldoutScore holdout_ssim(const std::vector<pose::Episode>& episodes) const;

  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

 private:
  RunConfig cfg_;
  ParamStore store_;
  std::unique_ptr<Generator> gen_;
  PatchDiscriminator d_i_, d_p_;
  PerceptualExtractor phi_;
  std::unique_ptr<Adam> opt_g_, opt_d_;
  std::uint64_t steps_ = 0;

  Tensor generator_loss(const Tensor& fake, const pose::Batch& batch, LossReport* report) const;
};

struct FitOptions {
  bool resume = false;
  /// Called after each step (progress display); may be empty.
  std::function<void(const LossReport&, std::optional<double> ssim)> on_step;
};

struct FitResult {
  std::vector<LossReport> losses;  // steps run in this call
  HoldoutScore final_holdout;
  std::filesystem::path checkpoint;
  std::size_t param_count = 0;
};

/// Runs config.train.iters steps (minus those already done when resuming),
/// writing config.ini, checkpoints and the metrics CSV under checkpoint_dir.
FitResult fit(const RunConfig& cfg, const FitOptions& opts = {});

struct SweepRow {
  std::size_t blocks = 0;
  std::size_t params = 0;
  double l1_first = 0;  // mean over the first 50 steps
  double l1_last = 0;   // mean over the last 50 steps
  double ssim = 0;
  double ssim_baseline = 0;
  double seconds = 0;
};

/// Trains one model per T in `blocks` (each under checkpoint_dir/T<k>) and
/// writes sweep.csv in checkpoint_dir.
std::vector<SweepRow> block_sweep(const RunConfig& base, const std::vector<std::size_t>& blocks,
                                  const std::function<void(const std::string&)>& log = {});

/// Mean of losses[begin, end).l1.
double mean_l1(const std::vector<LossReport>& losses, std::size_t begin, std::size_t end);

}  // namespace xing
