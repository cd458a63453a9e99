#include "xing/trainer.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "xing/checkpoint.hpp"
#include "xing/image_io.hpp"
#include "xing/metrics.hpp"

namespace xing {

namespace fs = std::filesystem;

namespace {

Tensor item(const Tensor& batch, std::size_t i) {
  Shape s(batch.shape().begin() + 1, batch.shape().end());
  const std::size_t n = numel(s);
  const auto d = batch.data().subspan(i * n, n);
  return Tensor(std::move(s), {d.begin(), d.end()});
}

void put_moments(TensorMap& out, const std::string& tag, Adam& opt) {
  const auto& ps = opt.params();
  for (std::size_t k = 0; k < ps.size(); ++k) {
    out.insert_or_assign("adam." + tag + ".m." + ps[k]->name,
                         Tensor(ps[k]->value.shape(), opt.first_moments()[k]));
    out.insert_or_assign("adam." + tag + ".v." + ps[k]->name,
                         Tensor(ps[k]->value.shape(), opt.second_moments()[k]));
  }
  out.insert_or_assign("adam." + tag + ".step", Tensor::scalar(double(opt.steps())));
}

const Tensor& require(const TensorMap& m, const std::string& name, const Shape& shape) {
  const auto it = m.find(name);
  if (it == m.end()) throw IoError("checkpoint is missing '" + name + "'");
  if (it->second.shape() != shape) throw IoError("checkpoint record '" + name + "' has wrong shape");
  return it->second;
}

void get_moments(const TensorMap& m, const std::string& tag, Adam& opt) {
  const auto& ps = opt.params();
  for (std::size_t k = 0; k < ps.size(); ++k) {
    const auto mv = require(m, "adam." + tag + ".m." + ps[k]->name, ps[k]->value.shape()).data();
    const auto vv = require(m, "adam." + tag + ".v." + ps[k]->name, ps[k]->value.shape()).data();
    opt.first_moments()[k].assign(mv.begin(), mv.end());
    opt.second_moments()[k].assign(vv.begin(), vv.end());
  }
  opt.set_steps(static_cast<std::uint64_t>(require(m, "adam." + tag + ".step", {1}).item()));
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

constexpr const char* kCsvHeader = "step,loss_d,loss_g_adv,loss_l1,loss_p,ssim_holdout";

// Keeps the header and rows with step <= `keep`; used when resuming.
void truncate_log(const fs::path& path, std::uint64_t keep) {
  std::ifstream in(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (lines.empty()) {
      lines.push_back(line);
      continue;
    }
    const auto comma = line.find(',');
    if (comma != std::string::npos && std::stoull(line.substr(0, comma)) <= keep) lines.push_back(line);
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot rewrite " + path.string());
  if (lines.empty()) lines.push_back(kCsvHeader);
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace

Trainer::Trainer(const RunConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(pose::mix_seed(cfg_.train.seed, 0x1417));
  gen_ = std::make_unique<Generator>(cfg_.model, store_, rng);
  d_i_ = PatchDiscriminator(store_, "d_i", 3, rng);
  d_p_ = PatchDiscriminator(store_, "d_p", pose::kJoints, rng);
  std::vector<Parameter*> disc = store_.with_prefix("d_i.");
  for (Parameter* p : store_.with_prefix("d_p.")) disc.push_back(p);
  opt_g_ = std::make_unique<Adam>(store_.with_prefix("gen."), cfg_.optim);
  opt_d_ = std::make_unique<Adam>(std::move(disc), cfg_.optim);
}

Tensor Trainer::discriminator_objective(const Bind& disc_bind, const pose::Batch& batch,
                                        const Tensor& fake) const {
  const Tensor real[] = {d_i_.forward(disc_bind, batch.source_image, batch.target_image),
                         d_p_.forward(disc_bind, batch.target_pose, batch.target_image)};
  const Tensor fakes[] = {d_i_.forward(disc_bind, batch.source_image, fake),
                          d_p_.forward(disc_bind, batch.target_pose, fake)};
  return discriminator_loss(real, fakes, cfg_.gan);
}

Tensor Trainer::generator_loss(const Tensor& fake, const pose::Batch& batch,
                               LossReport* report) const {
  const Bind frozen = Bind::frozen();
  const Tensor scores[] = {d_i_.forward(frozen, batch.source_image, fake),
                           d_p_.forward(frozen, batch.target_pose, fake)};
  const Tensor adv = generator_adv_loss(scores, cfg_.gan);
  const Tensor l1 = l1_loss(fake, batch.target_image);
  const Tensor lp = perceptual_loss(fake, batch.target_image, phi_);
  const auto& w = cfg_.weights;
  const Tensor total =
      add(add(mul_scalar(adv, w.gan), mul_scalar(l1, w.l1)), mul_scalar(lp, w.perceptual));
  if (report) {
    report->loss_g_adv = adv.item();
    report->loss_l1 = l1.item();
    report->loss_p = lp.item();
    report->loss_g = total.item();
  }
  return total;
}

Tensor Trainer::generator_objective(const Bind& gen_bind, const pose::Batch& batch,
                                    LossReport* report) const {
  const auto out = gen_->forward(gen_bind, batch.source_image, batch.source_pose, batch.target_pose);
  return generator_loss(out.image, batch, report);
}

LossReport Trainer::train_step(const pose::Batch& batch) {
  LossReport r;
  Graph gen_graph;
  const auto out =
      gen_->forward(Bind(&gen_graph), batch.source_image, batch.source_pose, batch.target_pose);

  opt_d_->zero_grad();
  {
    Graph disc_graph;
    const Tensor ld = discriminator_objective(Bind(&disc_graph), batch, out.image.detach());
    r.loss_d = ld.item();
    disc_graph.backward(ld);
  }
  opt_d_->step();

  opt_g_->zero_grad();
  gen_graph.backward(generator_loss(out.image, batch, &r));
  opt_g_->step();

  r.step = ++steps_;
  return r;
}

LossReport Trainer::evaluate_losses(const pose::Batch& batch) const {
  LossReport r;
  r.step = steps_;
  const Tensor fake = generate(batch).image;
  r.loss_d = discriminator_objective(Bind::frozen(), batch, fake).item();
  generator_loss(fake, batch, &r);
  return r;
}

GeneratorOutput Trainer::generate(const pose::Batch& batch) const {
  return gen_->forward(Bind::frozen(), batch.source_image, batch.source_pose, batch.target_pose);
}

HoldoutScore Trainer::holdout_ssim(const std::vector<pose::Episode>& episodes) const {
  if (episodes.empty()) throw ContractError("holdout_ssim: no episodes");
  HoldoutScore s;
  const std::size_t chunk = cfg_.train.batch;
  for (std::size_t begin = 0; begin < episodes.size(); begin += chunk) {
    const std::vector<pose::Episode> part(
        episodes.begin() + static_cast<std::ptrdiff_t>(begin),
        episodes.begin() + static_cast<std::ptrdiff_t>(std::min(episodes.size(), begin + chunk)));
    const auto batch = pose::stack(part);
    const Tensor fake = generate(batch).image;
    for (std::size_t i = 0; i < part.size(); ++i) {
      s.generated += ssim(item(fake, i), part[i].target_image);
      s.baseline += ssim(part[i].source_image, part[i].target_image);
    }
  }
  s.generated /= double(episodes.size());
  s.baseline /= double(episodes.size());
  return s;
}

void Trainer::save(const fs::path& path) const {
  TensorMap m;
  add_params(m, store_);
  put_moments(m, "gen", *opt_g_);
  put_moments(m, "disc", *opt_d_);
  m.insert_or_assign("trainer.step", Tensor::scalar(double(steps_)));
  save_tensors(path, m);
}

void Trainer::load(const fs::path& path) {
  const TensorMap m = load_tensors(path);
  load_into(store_, m);
  get_moments(m, "gen", *opt_g_);
  get_moments(m, "disc", *opt_d_);
  steps_ = static_cast<std::uint64_t>(require(m, "trainer.step", {1}).item());
}

double mean_l1(const std::vector<LossReport>& losses, std::size_t begin, std::size_t end) {
  if (begin >= end || end > losses.size()) throw ContractError("mean_l1: empty or invalid range");
  double s = 0;
  for (std::size_t i = begin; i < end; ++i) s += losses[i].loss_l1;
  return s / double(end - begin);
}

FitResult fit(const RunConfig& cfg, const FitOptions& opts) {
  cfg.validate();
  const fs::path dir(cfg.train.checkpoint_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  save_config(dir / "config.ini", cfg);

  Trainer trainer(cfg);
  FitResult result;
  result.checkpoint = dir / "latest.xgpp";
  result.param_count = trainer.params().total_numel();

  const fs::path log = cfg.log_path();
  if (opts.resume && fs::exists(result.checkpoint)) {
    trainer.load(result.checkpoint);
    truncate_log(log, trainer.steps_done());
  } else {
    std::ofstream out(log, std::ios::trunc);
    if (!out) throw IoError("cannot open " + log.string() + " for writing");
    out << kCsvHeader << '\n';
    trainer.save(result.checkpoint);
  }

  std::ofstream csv(log, std::ios::app);
  if (!csv) throw IoError("cannot open " + log.string() + " for appending");
  const auto holdout =
      pose::holdout_episodes(cfg.train.seed, cfg.train.holdout, cfg.model.height, cfg.model.width);

  while (trainer.steps_done() < cfg.train.iters) {
    const auto batch = pose::training_batch(cfg.train.seed, trainer.steps_done(), cfg.train.batch,
                                            cfg.model.height, cfg.model.width);
    const LossReport r = trainer.train_step(batch);
    result.losses.push_back(r);

    std::optional<double> score;
    if (r.step % cfg.train.eval_every == 0 || r.step == cfg.train.iters) {
      const auto h = trainer.holdout_ssim(holdout);
      score = h.generated;
    }
    csv << r.step << ',' << fmt(r.loss_d) << ',' << fmt(r.loss_g_adv) << ',' << fmt(r.loss_l1) << ','
        << fmt(r.loss_p) << ',' << (score ? fmt(*score) : "") << '\n';
    csv.flush();
    if (!csv) throw IoError("write failed: " + log.string());
    if (r.step % cfg.train.checkpoint_every == 0 || r.step == cfg.train.iters) {
      trainer.save(result.checkpoint);
    }
    if (opts.on_step) opts.on_step(r, score);
  }
  result.final_holdout = trainer.holdout_ssim(holdout);
  return result;
}

std::vector<SweepRow> block_sweep(const RunConfig& base, const std::vector<std::size_t>& blocks,
                                  const std::function<void(const std::string&)>& log) {
  if (blocks.empty()) throw ContractError("block_sweep: no block counts");
  const fs::path dir(base.train.checkpoint_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  std::vector<SweepRow> rows;
  for (std::size_t t : blocks) {
    RunConfig cfg = base;
    cfg.model.blocks = t;
    cfg.train.checkpoint_dir = (dir / ("T" + std::to_string(t))).string();
    const auto start = std::chrono::steady_clock::now();
    const FitResult res = fit(cfg);
    SweepRow row;
    row.blocks = t;
    row.params = res.param_count;
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const std::size_t n = res.losses.size();
    if (n > 0) {
      const std::size_t window = std::min<std::size_t>(50, n);
      row.l1_first = mean_l1(res.losses, 0, window);
      row.l1_last = mean_l1(res.losses, n - window, n);
    }
    row.ssim = res.final_holdout.generated;
    row.ssim_baseline = res.final_holdout.baseline;
    rows.push_back(row);
    if (log) {
      log("T=" + std::to_string(t) + " ssim=" + fmt(row.ssim) + " l1_last=" + fmt(row.l1_last) +
          " seconds=" + fmt(row.seconds));
    }
  }

  const fs::path csv_path = dir / "sweep.csv";
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw IoError("cannot open " + csv_path.string() + " for writing");
  csv << "blocks,params,l1_first50,l1_last50,ssim_holdout,ssim_copy_baseline,seconds\n";
  for (const auto& r : rows) {
    csv << r.blocks << ',' << r.params << ',' << fmt(r.l1_first) << ',' << fmt(r.l1_last) << ','
        << fmt(r.ssim) << ',' << fmt(r.ssim_baseline) << ',' << fmt(r.seconds) << '\n';
  }
  csv.flush();
  if (!csv) throw IoError("write failed: " + csv_path.string());
  return rows;
}

}  // namespace xing
