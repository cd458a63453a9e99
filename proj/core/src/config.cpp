#include "xing/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "xing/image_io.hpp"

namespace xing {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <class T>
T parse_uint(const std::string& key, const std::string& v) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
}

std::string join(const std::vector<std::size_t>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
  return s;
}

std::vector<std::size_t> split_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_uint<std::size_t>(key, trim(item)));
  if (out.empty()) throw ConfigError("config: '" + key + "' must be a non-empty list");
  return out;
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class T>
Field uint_field(T RunConfig::*group, std::size_t T::*member, const std::string& key) {
  return {[=](RunConfig& c, const std::string& v) { (c.*group).*member = parse_uint<std::size_t>(key, v); },
          [=](const RunConfig& c) { return std::to_string((c.*group).*member); }};
}

template <class T>
Field double_field(T RunConfig::*group, double T::*member, const std::string& key) {
  return {[=](RunConfig& c, const std::string& v) { (c.*group).*member = parse_double(key, v); },
          [=](const RunConfig& c) { return fmt_double((c.*group).*member); }};
}

template <class T>
Field string_field(T RunConfig::*group, std::string T::*member) {
  return {[=](RunConfig& c, const std::string& v) { (c.*group).*member = v; },
          [=](const RunConfig& c) { return (c.*group).*member; }};
}

// Ordered (section, key) -> accessor table; serialization follows this order.
const std::vector<std::pair<std::string, Field>>& fields() {
  using R = RunConfig;
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> t;
    t.push_back({"model.variant",
                 {[](R& c, const std::string& v) { c.model.variant = parse_variant(v); },
                  [](const R& c) { return to_string(c.model.variant); }}});
    t.push_back({"model.blocks", uint_field(&R::model, &GeneratorConfig::blocks, "model.blocks")});
    t.push_back({"model.channels", uint_field(&R::model, &GeneratorConfig::channels, "model.channels")});
    t.push_back({"model.height", uint_field(&R::model, &GeneratorConfig::height, "model.height")});
    t.push_back({"model.width", uint_field(&R::model, &GeneratorConfig::width, "model.width")});
    t.push_back({"model.intermediates",
                 {[](R& c, const std::string& v) {
                    c.model.fusion.intermediates = parse_uint<std::size_t>("model.intermediates", v);
                  },
                  [](const R& c) { return std::to_string(c.model.fusion.intermediates); }}});
    t.push_back({"model.fusion",
                 {[](R& c, const std::string& v) { c.model.fusion.mode = parse_fusion_mode(v); },
                  [](const R& c) { return to_string(c.model.fusion.mode); }}});
    t.push_back({"model.pyramid",
                 {[](R& c, const std::string& v) {
                    c.model.pyramid.factors = split_sizes("model.pyramid", v);
                  },
                  [](const R& c) { return join(c.model.pyramid.factors); }}});
    t.push_back({"model.ea_max_reduced",
                 uint_field(&R::model, &GeneratorConfig::ea_max_reduced, "model.ea_max_reduced")});
    t.push_back({"model.decoder_width",
                 uint_field(&R::model, &GeneratorConfig::decoder_width, "model.decoder_width")});

    t.push_back({"loss.lambda_gan", double_field(&R::weights, &LossWeights::gan, "loss.lambda_gan")});
    t.push_back({"loss.lambda_l1", double_field(&R::weights, &LossWeights::l1, "loss.lambda_l1")});
    t.push_back({"loss.lambda_p",
                 double_field(&R::weights, &LossWeights::perceptual, "loss.lambda_p")});
    t.push_back({"loss.gan_loss",
                 {[](R& c, const std::string& v) { c.gan.kind = parse_gan_loss(v); },
                  [](const R& c) { return to_string(c.gan.kind); }}});
    t.push_back({"loss.disc_reduce",
                 {[](R& c, const std::string& v) { c.gan.reduce = parse_disc_reduce(v); },
                  [](const R& c) { return to_string(c.gan.reduce); }}});

    t.push_back({"optim.lr", double_field(&R::optim, &AdamConfig::lr, "optim.lr")});
    t.push_back({"optim.beta1", double_field(&R::optim, &AdamConfig::beta1, "optim.beta1")});
    t.push_back({"optim.beta2", double_field(&R::optim, &AdamConfig::beta2, "optim.beta2")});
    t.push_back({"optim.eps", double_field(&R::optim, &AdamConfig::eps, "optim.eps")});

    t.push_back({"data.holdout", uint_field(&R::train, &TrainConfig::holdout, "data.holdout")});

    t.push_back({"train.seed",
                 {[](R& c, const std::string& v) { c.train.seed = parse_uint<std::uint64_t>("train.seed", v); },
                  [](const R& c) { return std::to_string(c.train.seed); }}});
    t.push_back({"train.iters", uint_field(&R::train, &TrainConfig::iters, "train.iters")});
    t.push_back({"train.batch", uint_field(&R::train, &TrainConfig::batch, "train.batch")});
    t.push_back({"train.checkpoint_every",
                 uint_field(&R::train, &TrainConfig::checkpoint_every, "train.checkpoint_every")});
    t.push_back({"train.eval_every",
                 uint_field(&R::train, &TrainConfig::eval_every, "train.eval_every")});
    t.push_back({"train.checkpoint_dir", string_field(&R::train, &TrainConfig::checkpoint_dir)});
    t.push_back({"train.log", string_field(&R::train, &TrainConfig::log)});
    return t;
  }();
  return table;
}

const Field* find_field(const std::string& qualified) {
  for (const auto& [name, f] : fields()) {
    if (name == qualified) return &f;
  }
  return nullptr;
}

}  // namespace

RunConfig RunConfig::desk() {
  RunConfig c;
  c.model.variant = Variant::xingpp;
  c.model.blocks = 2;
  c.model.channels = 32;
  c.model.height = 64;
  c.model.width = 32;
  c.model.fusion = {3, FusionMode::dccaf};
  c.train.batch = 8;
  c.train.iters = 500;
  return c;
}

void RunConfig::validate() const {
  model.validate();
  if (weights.gan < 0 || weights.l1 < 0 || weights.perceptual < 0) {
    throw ConfigError("config: loss weights must be >= 0");
  }
  if (!(optim.lr > 0) || !(optim.beta1 >= 0 && optim.beta1 < 1) ||
      !(optim.beta2 >= 0 && optim.beta2 < 1) || !(optim.eps > 0)) {
    throw ConfigError("config: invalid Adam hyper-parameters");
  }
  if (train.batch == 0) throw ConfigError("config: train.batch must be >= 1");
  if (train.holdout == 0) throw ConfigError("config: data.holdout must be >= 1");
  if (train.checkpoint_every == 0 || train.eval_every == 0) {
    throw ConfigError("config: checkpoint_every and eval_every must be >= 1");
  }
  if (model.height < 16 || model.width < 16) {
    throw ConfigError("config: synthetic episodes need height and width >= 16");
  }
  if (train.checkpoint_dir.empty()) throw ConfigError("config: train.checkpoint_dir is empty");
  const std::filesystem::path log(train.log);
  if (train.log.empty() || log.is_absolute() || log.lexically_normal().string().starts_with("..")) {
    throw ConfigError("config: train.log must be a relative path inside checkpoint_dir");
  }
}

std::filesystem::path RunConfig::log_path() const {
  return std::filesystem::path(train.checkpoint_dir) / train.log;
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::stringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    line = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "model" && section != "loss" && section != "optim" && section != "data" &&
          section != "train") {
        throw ConfigError(where + "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside any section");
    const std::string key = section + "." + trim(line.substr(0, eq));
    const Field* f = find_field(key);
    if (!f) throw ConfigError(where + "unknown key '" + key + "'");
    try {
      f->set(cfg, trim(line.substr(eq + 1)));
    } catch (const ContractError& e) {
      throw ConfigError(where + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return cfg;
}

std::string serialize_config(const RunConfig& cfg) {
  std::string out, section;
  for (const auto& [name, f] : fields()) {
    const auto dot = name.find('.');
    const std::string sec = name.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "[" : "\n[") + sec + "]\n";
      section = sec;
    }
    out += name.substr(dot + 1) + " = " + f.get(cfg) + "\n";
  }
  return out;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void save_config(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << serialize_config(cfg);
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace xing
