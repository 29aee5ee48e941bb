// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#include "daem/trainer.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "daem/error.hpp"

namespace daem {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double num_or_nan(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

// Exact double storage, including infinities.
std::uint64_t bits(double v) { return std::bit_cast<std::uint64_t>(v); }
double from_bits(std::uint64_t b) { return std::bit_cast<double>(b); }

std::vector<Tensor*> tensors_of(ModelParams& p) {
  std::vector<Tensor*> out;
  p.visit([&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

std::vector<const Tensor*> tensors_of(const ModelParams& p) {
  std::vector<const Tensor*> out;
  p.visit([&](const std::string&, const Tensor& t) { out.push_back(&t); });
  return out;
}

void zero(ModelParams& p) {
  p.visit([](const std::string&, Tensor& t) { t.fill(0.0); });
}

void store_params(Archive& a, const std::string& prefix, const ModelParams& p) {
  p.visit([&](const std::string& name, const Tensor& t) { a.tensors.emplace(prefix + name, t); });
}

ModelParams load_params(const Archive& a, const std::string& prefix, const ModelConfig& config) {
  ModelParams p = init_params(config, 0);
  p.visit([&](const std::string& name, Tensor& t) {
    const Tensor& stored = a.tensor(prefix + name);
    require(stored.same_shape(t), ErrorKind::kShape,
            "checkpoint tensor '" + name + "' has shape " + stored.shape_string() +
                ", model expects " + t.shape_string());
    t = stored;
  });
  return p;
}

json model_config_to_json(const ModelConfig& m) {
  return json{{"feature_dim", m.feature_dim},   {"tme_feature_dim", m.tme_feature_dim},
              {"hidden", m.hidden},             {"heads", m.heads},
              {"head_dim", m.head_dim},         {"dam_layers", m.dam_layers},
              {"pool_large", m.pool_large},     {"pool_small", m.pool_small},
              {"pool_tme", m.pool_tme},         {"expert_dim", m.expert_dim},
              {"head_hidden", m.head_hidden},   {"classes", m.classes},
              {"neighbors", m.neighbors},       {"leaky_slope", m.leaky_slope},
              {"ln_eps", m.ln_eps},             {"dropout", m.dropout},
              {"compress_tokens", m.compress_tokens}};
}

template <typename T>
void read_key(const json& j, const char* key, T& out, std::set<std::string>& seen) {
  if (!j.contains(key)) return;
  seen.insert(key);
  out = j.at(key).get<T>();
}

void reject_unknown(const json& j, const std::set<std::string>& seen, const std::string& where) {
  for (const auto& [k, v] : j.items())
    require(seen.count(k) > 0, ErrorKind::kValidation, "unknown key '" + k + "' in " + where);
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig m;
  std::set<std::string> seen;
  read_key(j, "feature_dim", m.feature_dim, seen);
  read_key(j, "tme_feature_dim", m.tme_feature_dim, seen);
  read_key(j, "hidden", m.hidden, seen);
  read_key(j, "heads", m.heads, seen);
  read_key(j, "head_dim", m.head_dim, seen);
  read_key(j, "dam_layers", m.dam_layers, seen);
  read_key(j, "pool_large", m.pool_large, seen);
  read_key(j, "pool_small", m.pool_small, seen);
  read_key(j, "pool_tme", m.pool_tme, seen);
  read_key(j, "expert_dim", m.expert_dim, seen);
  read_key(j, "head_hidden", m.head_hidden, seen);
  read_key(j, "classes", m.classes, seen);
  read_key(j, "neighbors", m.neighbors, seen);
  read_key(j, "leaky_slope", m.leaky_slope, seen);
  read_key(j, "ln_eps", m.ln_eps, seen);
  read_key(j, "dropout", m.dropout, seen);
  read_key(j, "compress_tokens", m.compress_tokens, seen);
  reject_unknown(j, seen, "model config");
  return m;
}

struct PreparedBag {
  const WsiBag* bag = nullptr;
  BagGraphs graphs;
  int label = 0;
};

std::vector<PreparedBag> prepare(const Cohort& bags, const ModelConfig& config) {
  std::vector<PreparedBag> out;
  out.reserve(bags.size());
  for (const WsiBag& b : bags)
    out.push_back({&b, build_bag_graphs(b, config.neighbors), static_cast<int>(b.label)});
  return out;
}

struct SplitEval {
  double loss = 0.0;
  double accuracy = 0.0;
  double auc = kNaN;
};

SplitEval evaluate(const std::vector<PreparedBag>& bags, const ModelParams& params,
                   const ModelConfig& config) {
  SplitEval e;
  std::vector<double> probs;
  std::vector<int> labels;
  std::size_t correct = 0;
  for (const PreparedBag& b : bags) {
    const Prediction p = predict(b.graphs, params, config);
    e.loss += cross_entropy(p.logits, b.label);
    const int guess = p.prob_stas >= 0.5 ? 1 : 0;
    correct += guess == b.label ? 1 : 0;
    probs.push_back(p.prob_stas);
    labels.push_back(b.label);
  }
  const double n = static_cast<double>(bags.size());
  e.loss /= n;
  e.accuracy = static_cast<double>(correct) / n;
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  if (pos > 0 && static_cast<std::size_t>(pos) < labels.size()) e.auc = roc_auc(probs, labels);
  return e;
}

}  // namespace

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  require(lr >= 0.0 && std::isfinite(lr), ErrorKind::kValidation, "lr must be >= 0");
  require(epochs >= 1, ErrorKind::kValidation, "epochs must be >= 1");
  require(batch == 1, ErrorKind::kValidation, "batch size is fixed at 1");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, ErrorKind::kValidation,
          "moment decays must lie in [0, 1)");
  require(eps > 0.0, ErrorKind::kValidation, "eps must be > 0");
  require(weight_decay >= 0.0, ErrorKind::kValidation, "weight decay must be >= 0");
  require(plateau_factor > 0.0 && plateau_factor < 1.0, ErrorKind::kValidation,
          "plateau factor must lie in (0, 1)");
  require(plateau_patience >= 0, ErrorKind::kValidation, "plateau patience must be >= 0");
  require(plateau_threshold >= 0.0, ErrorKind::kValidation, "plateau threshold must be >= 0");
  require(clip_norm >= 0.0, ErrorKind::kValidation, "clip norm must be >= 0 (0 disables)");
  loss.validate();
  model.validate();
}

std::string train_config_json(const TrainConfig& c) {
  json j{{"lr", c.lr},
         {"epochs", c.epochs},
         {"batch", c.batch},
         {"beta1", c.beta1},
         {"beta2", c.beta2},
         {"eps", c.eps},
         {"weight_decay", c.weight_decay},
         {"plateau_factor", c.plateau_factor},
         {"plateau_patience", c.plateau_patience},
         {"plateau_threshold", c.plateau_threshold},
         {"clip_norm", c.clip_norm},
         {"seed", c.seed},
         {"loss",
          {{"lambda", c.loss.lambda},
           {"beta", c.loss.beta},
           {"gamma", c.loss.gamma},
           {"tau", c.loss.tau},
           {"queue_capacity", c.loss.queue_capacity}}},
         {"model", model_config_to_json(c.model)}};
  return j.dump(2);
}

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig c;
  try {
    const json j = json::parse(text);
    require(j.is_object(), ErrorKind::kValidation, "train config must be a JSON object");
    std::set<std::string> seen;
    read_key(j, "lr", c.lr, seen);
    read_key(j, "epochs", c.epochs, seen);
    read_key(j, "batch", c.batch, seen);
    read_key(j, "beta1", c.beta1, seen);
    read_key(j, "beta2", c.beta2, seen);
    read_key(j, "eps", c.eps, seen);
    read_key(j, "weight_decay", c.weight_decay, seen);
    read_key(j, "plateau_factor", c.plateau_factor, seen);
    read_key(j, "plateau_patience", c.plateau_patience, seen);
    read_key(j, "plateau_threshold", c.plateau_threshold, seen);
    read_key(j, "clip_norm", c.clip_norm, seen);
    read_key(j, "seed", c.seed, seen);
    if (j.contains("loss")) {
      seen.insert("loss");
      const json& l = j.at("loss");
      std::set<std::string> ls;
      read_key(l, "lambda", c.loss.lambda, ls);
      read_key(l, "beta", c.loss.beta, ls);
      read_key(l, "gamma", c.loss.gamma, ls);
      read_key(l, "tau", c.loss.tau, ls);
      read_key(l, "queue_capacity", c.loss.queue_capacity, ls);
      reject_unknown(l, ls, "loss config");
    }
    if (j.contains("model")) {
      seen.insert("model");
      c.model = model_config_from_json(j.at("model"));
    }
    reject_unknown(j, seen, "train config");
  } catch (const json::exception& e) {
    fail(ErrorKind::kValidation, std::string("invalid train config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig read_train_config(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), ErrorKind::kMissing, "config not found: " + path.string());
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str());
}

std::uint64_t config_hash(const TrainConfig& c) { return fnv1a64(train_config_json(c)); }

// ---------------------------------------------------------------------------

AdamState make_adam_state(const ModelParams& params) {
  return {params.zeros_like(), params.zeros_like(), 0};
}

void adamw_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr,
                const TrainConfig& config) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  const double decay = 1.0 - lr * config.weight_decay;
  auto p = tensors_of(params);
  auto g = tensors_of(grads);
  auto m = tensors_of(state.m);
  auto v = tensors_of(state.v);
  for (std::size_t i = 0; i < p.size(); ++i) {
    double* pd = p[i]->data();
    const double* gd = g[i]->data();
    double* md = m[i]->data();
    double* vd = v[i]->data();
    for (std::size_t k = 0; k < p[i]->size(); ++k) {
      pd[k] *= decay;
      md[k] = config.beta1 * md[k] + (1.0 - config.beta1) * gd[k];
      vd[k] = config.beta2 * vd[k] + (1.0 - config.beta2) * gd[k] * gd[k];
      const double mhat = md[k] / bc1;
      const double vhat = vd[k] / bc2;
      pd[k] -= lr * mhat / (std::sqrt(vhat) + config.eps);
    }
  }
}

double global_norm(const ModelParams& grads) {
  double ss = 0.0;
  grads.visit([&](const std::string&, const Tensor& t) { ss += squared_norm(t.values()); });
  return std::sqrt(ss);
}

double clip_gradients(ModelParams& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    grads.visit([&](const std::string&, Tensor& t) { t *= s; });
  }
  return norm;
}

bool PlateauScheduler::step(double value, double factor, int patience, double threshold) {
  if (value < best * (1.0 - threshold)) {
    best = value;
    bad_epochs = 0;
    return false;
  }
  if (++bad_epochs > patience) {
    lr *= factor;
    bad_epochs = 0;
    ++reductions;
    return true;
  }
  return false;
}

// ---------------------------------------------------------------------------

std::string epoch_log_json(const std::vector<EpochLog>& log) {
  json arr = json::array();
  for (const EpochLog& e : log)
    arr.push_back({{"epoch", e.epoch},
                   {"lr", e.lr},
                   {"loss", num(e.loss)},
                   {"supcon", num(e.supcon)},
                   {"mse", num(e.mse)},
                   {"ce", num(e.ce)},
                   {"train_accuracy", e.train_accuracy},
                   {"val_loss", num(e.val_loss)},
                   {"val_accuracy", e.val_accuracy},
                   {"val_auc", num(e.val_auc)},
                   {"clipped_steps", e.clipped_steps},
                   {"max_grad_norm", num(e.max_grad_norm)},
                   {"energy", e.energy},
                   {"improved", e.improved}});
  return arr.dump(1);
}

std::vector<EpochLog> parse_epoch_log(const std::string& text) {
  std::vector<EpochLog> out;
  try {
    for (const json& j : json::parse(text)) {
      EpochLog e;
      e.epoch = j.at("epoch").get<int>();
      e.lr = j.at("lr").get<double>();
      e.loss = num_or_nan(j.at("loss"));
      e.supcon = num_or_nan(j.at("supcon"));
      e.mse = num_or_nan(j.at("mse"));
      e.ce = num_or_nan(j.at("ce"));
      e.train_accuracy = j.at("train_accuracy").get<double>();
      e.val_loss = num_or_nan(j.at("val_loss"));
      e.val_accuracy = j.at("val_accuracy").get<double>();
      e.val_auc = num_or_nan(j.at("val_auc"));
      e.clipped_steps = j.at("clipped_steps").get<int>();
      e.max_grad_norm = num_or_nan(j.at("max_grad_norm"));
      e.energy = j.at("energy").get<std::vector<double>>();
      e.improved = j.at("improved").get<bool>();
      out.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kValidation, std::string("invalid epoch log: ") + e.what());
  }
  return out;
}

TrainState init_train_state(const TrainConfig& config) {
  config.validate();
  TrainState s;
  SeededRng root(config.seed);
  s.params = init_params(config.model, root.fork(1).next_u64());
  s.rng = root.fork(2);
  s.adam = make_adam_state(s.params);
  s.scheduler.lr = config.lr;
  s.queue = ContrastiveQueue(config.loss.queue_capacity);
  s.best_params = s.params;
  return s;
}

void save_train_state(const TrainState& s, const TrainConfig& config,
                      const std::filesystem::path& path) {
  Archive a;
  store_params(a, "param/", s.params);
  store_params(a, "adam_m/", s.adam.m);
  store_params(a, "adam_v/", s.adam.v);
  store_params(a, "best/", s.best_params);
  json queue_labels = json::array();
  if (s.queue.size() > 0) {
    const std::size_t d = s.queue.entries().front().embedding.size();
    std::vector<double> flat;
    for (const QueueEntry& e : s.queue.entries()) {
      flat.insert(flat.end(), e.embedding.begin(), e.embedding.end());
      queue_labels.push_back(e.label);
    }
    a.tensors.emplace("queue/embeddings", Tensor({s.queue.size(), d}, std::move(flat)));
  }
  json meta{{"epoch", s.epoch},
            {"adam_step", s.adam.step},
            {"best_val_loss", bits(s.best_val_loss)},
            {"best_epoch", s.best_epoch},
            {"scheduler",
             {{"lr", bits(s.scheduler.lr)},
              {"best", bits(s.scheduler.best)},
              {"bad_epochs", s.scheduler.bad_epochs},
              {"reductions", s.scheduler.reductions}}},
            {"queue_capacity", s.queue.capacity()},
            {"queue_labels", queue_labels}};
  a.blobs["kind"] = "train_state";
  a.blobs["config"] = train_config_json(config);
  a.blobs["config_hash"] = hex64(config_hash(config));
  a.blobs["rng"] = s.rng.state();
  a.blobs["meta"] = meta.dump();
  a.blobs["log"] = epoch_log_json(s.log);
  write_archive(a, path);
}

TrainState load_train_state(const std::filesystem::path& path, const TrainConfig& config) {
  const Archive a = read_archive(path);
  require(a.blob("kind") == "train_state", ErrorKind::kValidation,
          path.string() + " is not a training-state checkpoint");
  require(a.blob("config_hash") == hex64(config_hash(config)), ErrorKind::kValidation,
          "checkpoint was written with a different training config");
  TrainState s;
  s.params = load_params(a, "param/", config.model);
  s.adam.m = load_params(a, "adam_m/", config.model);
  s.adam.v = load_params(a, "adam_v/", config.model);
  s.best_params = load_params(a, "best/", config.model);
  s.rng.restore(a.blob("rng"));
  try {
    const json meta = json::parse(a.blob("meta"));
    s.epoch = meta.at("epoch").get<int>();
    s.adam.step = meta.at("adam_step").get<std::uint64_t>();
    s.best_val_loss = from_bits(meta.at("best_val_loss").get<std::uint64_t>());
    s.best_epoch = meta.at("best_epoch").get<int>();
    const json& sch = meta.at("scheduler");
    s.scheduler.lr = from_bits(sch.at("lr").get<std::uint64_t>());
    s.scheduler.best = from_bits(sch.at("best").get<std::uint64_t>());
    s.scheduler.bad_epochs = sch.at("bad_epochs").get<int>();
    s.scheduler.reductions = sch.at("reductions").get<int>();
    s.queue = ContrastiveQueue(meta.at("queue_capacity").get<std::size_t>());
    const auto labels = meta.at("queue_labels").get<std::vector<int>>();
    if (!labels.empty()) {
      const Tensor& emb = a.tensor("queue/embeddings");
      require(emb.rows() == labels.size(), ErrorKind::kValidation, "queue size mismatch");
      for (std::size_t i = 0; i < labels.size(); ++i) s.queue.push(emb.row(i), labels[i]);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kValidation, std::string("invalid checkpoint metadata: ") + e.what());
  }
  s.log = parse_epoch_log(a.blob("log"));
  return s;
}

void save_model(const ModelCheckpoint& c, const std::filesystem::path& path) {
  Archive a;
  store_params(a, "param/", c.params);
  a.blobs["kind"] = "model";
  a.blobs["config"] = train_config_json(c.config);
  a.blobs["config_hash"] = hex64(config_hash(c.config));
  a.blobs["meta"] = json{{"epoch", c.epoch}, {"val_loss", bits(c.val_loss)}}.dump();
  write_archive(a, path);
}

ModelCheckpoint load_model(const std::filesystem::path& path) {
  const Archive a = read_archive(path);
  ModelCheckpoint c;
  c.config = parse_train_config(a.blob("config"));
  const std::string& kind = a.blob("kind");
  if (kind == "train_state") {
    c.params = load_params(a, "best/", c.config.model);
    const json meta = json::parse(a.blob("meta"));
    c.epoch = meta.at("best_epoch").get<int>();
    c.val_loss = from_bits(meta.at("best_val_loss").get<std::uint64_t>());
    return c;
  }
  require(kind == "model", ErrorKind::kValidation, "unknown checkpoint kind '" + kind + "'");
  c.params = load_params(a, "param/", c.config.model);
  try {
    const json meta = json::parse(a.blob("meta"));
    c.epoch = meta.at("epoch").get<int>();
    c.val_loss = from_bits(meta.at("val_loss").get<std::uint64_t>());
  } catch (const json::exception& e) {
    fail(ErrorKind::kValidation, std::string("invalid checkpoint metadata: ") + e.what());
  }
  return c;
}

std::string checkpoint_hash(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), ErrorKind::kMissing,
          "checkpoint not found: " + path.string());
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return hex64(fnv1a64(ss.str()));
}

// ---------------------------------------------------------------------------

TrainResult train_fold(const Cohort& train, const Cohort& val, const TrainConfig& config,
                       const TrainOptions& options, TrainState* resume) {
  config.validate();
  require(!train.empty(), ErrorKind::kValidation, "train_fold: empty training split");
  require(!val.empty(), ErrorKind::kValidation, "train_fold: empty validation split");
  const ModelConfig& mc = config.model;
  const std::vector<PreparedBag> train_bags = prepare(train, mc);
  const std::vector<PreparedBag> val_bags = prepare(val, mc);

  TrainState state = resume ? std::move(*resume) : init_train_state(config);
  ModelParams grads = state.params.zeros_like();
  std::vector<std::size_t> order(train_bags.size());

  while (state.epoch < config.epochs) {
    if (options.stop_after_epoch >= 0 && state.epoch >= options.stop_after_epoch) break;
    EpochLog log;
    log.epoch = state.epoch + 1;
    log.lr = state.scheduler.lr;
    log.energy.assign(mc.dam_layers, 0.0);

    std::iota(order.begin(), order.end(), 0);
    state.rng.shuffle(order);
    for (std::size_t step = 0; step < order.size(); ++step) {
      const PreparedBag& b = train_bags[order[step]];
      const ForwardPass fp = model_forward(b.graphs, state.params, mc, state.rng, true);
      zero(grads);
      const StepLoss loss =
          model_loss(fp, b.graphs, b.label, state.queue, config.loss, state.params, mc, &grads);
      const double norm = global_norm(grads);
      if (!std::isfinite(loss.total) || !std::isfinite(norm)) {
        std::ostringstream os;
        os << "non-finite training loss at epoch " << log.epoch << ", step " << step + 1
           << " (bag " << b.bag->wsi_id << "): supcon=" << loss.components.supcon
           << " mse=" << loss.components.mse << " ce=" << loss.components.ce
           << " grad_norm=" << norm;
        fail(ErrorKind::kNumerical, os.str());
      }
      if (config.clip_norm > 0.0 && norm > config.clip_norm) {
        clip_gradients(grads, config.clip_norm);
        ++log.clipped_steps;
        if (options.on_event) {
          std::ostringstream os;
          os << "epoch " << log.epoch << " step " << step + 1 << ": gradient norm " << norm
             << " clipped to " << config.clip_norm;
          options.on_event(os.str());
        }
      }
      log.max_grad_norm = std::max(log.max_grad_norm, norm);
      adamw_step(state.params, grads, state.adam, state.scheduler.lr, config);
      state.queue.push(fp.head.contrast.values(), b.label);

      log.loss += loss.total;
      log.supcon += loss.components.supcon;
      log.mse += loss.components.mse;
      log.ce += loss.components.ce;
      for (std::size_t l = 0; l < mc.dam_layers; ++l) log.energy[l] += fp.experts[0].layer_energy[l];
    }
    const double steps = static_cast<double>(order.size());
    log.loss /= steps;
    log.supcon /= steps;
    log.mse /= steps;
    log.ce /= steps;
    for (double& e : log.energy) e /= steps;

    log.train_accuracy = evaluate(train_bags, state.params, mc).accuracy;
    const SplitEval v = evaluate(val_bags, state.params, mc);
    log.val_loss = v.loss;
    log.val_accuracy = v.accuracy;
    log.val_auc = v.auc;
    require(std::isfinite(v.loss), ErrorKind::kNumerical,
            "non-finite validation loss at epoch " + std::to_string(log.epoch));
    if (v.loss < state.best_val_loss) {
      state.best_val_loss = v.loss;
      state.best_epoch = log.epoch;
      state.best_params = state.params;
      log.improved = true;
    }
    const double before = state.scheduler.lr;
    if (state.scheduler.step(v.loss, config.plateau_factor, config.plateau_patience,
                             config.plateau_threshold) &&
        options.on_event) {
      std::ostringstream os;
      os << "epoch " << log.epoch << ": learning rate " << before << " -> " << state.scheduler.lr;
      options.on_event(os.str());
    }
    state.log.push_back(log);
    ++state.epoch;

    if (!options.checkpoint_dir.empty()) {
      save_train_state(state, config, options.checkpoint_dir / "last.ckpt");
      if (log.improved)
        save_model({state.best_params, config, state.best_epoch, state.best_val_loss},
                   options.checkpoint_dir / "best.ckpt");
    }
    if (options.on_epoch) options.on_epoch(log);
    if (options.should_stop && options.should_stop(log)) break;
  }

  TrainResult result;
  result.best = {state.best_params, config, state.best_epoch, state.best_val_loss};
  result.log = state.log;
  result.state = std::move(state);
  return result;
}

std::vector<double> predict_cohort(const Cohort& bags, const ModelParams& params,
                                   const ModelConfig& config) {
  std::vector<double> probs;
  probs.reserve(bags.size());
  for (const WsiBag& b : bags)
    probs.push_back(predict(build_bag_graphs(b, config.neighbors), params, config).prob_stas);
  return probs;
}

// ---------------------------------------------------------------------------

double report_metric(const EvalReport& r, const std::string& name) {
  if (name == "accuracy") return r.accuracy;
  if (name == "precision") return r.precision;
  if (name == "recall") return r.recall;
  if (name == "f1") return r.f1;
  if (name == "specificity") return r.specificity;
  if (name == "auc") return r.auc;
  if (name == "prc_auc") return r.prc_auc;
  if (name == "brier") return r.brier;
  fail(ErrorKind::kValidation, "unknown metric '" + name + "'");
}

std::vector<SectionSummary> summarize_folds(const std::vector<FoldOutcome>& folds) {
  std::vector<SectionSummary> out;
  for (SectionKind section : {SectionKind::kFrozen, SectionKind::kParaffin}) {
    SectionSummary s;
    s.section = section;
    for (const FoldOutcome& f : folds) {
      std::vector<double> probs;
      std::vector<int> labels;
      for (std::size_t i = 0; i < f.probs.size(); ++i)
        if (f.sections[i] == section) {
          probs.push_back(f.probs[i]);
          labels.push_back(f.labels[i]);
        }
      if (probs.empty()) {
        for (const char* m : kCvMetricNames) s.per_fold[m].push_back(kNaN);
        continue;
      }
      const EvalReport r = threshold_report(probs, labels);
      for (const char* m : kCvMetricNames) s.per_fold[m].push_back(report_metric(r, m));
    }
    for (const auto& [name, values] : s.per_fold) s.aggregate[name] = mean_sem(values);
    out.push_back(std::move(s));
  }
  return out;
}

CvResult run_cv(const Cohort& cohort, const FoldPlan& plan, const TrainConfig& config,
                const std::filesystem::path& out_dir, const TrainOptions& options) {
  config.validate();
  CvResult result;
  for (int k = 0; k < plan.folds; ++k) {
    Cohort train;
    Cohort val;
    for (std::size_t i : plan.complement(cohort, k)) train.push_back(cohort[i]);
    for (std::size_t i : plan.members(cohort, k)) val.push_back(cohort[i]);
    std::set<std::string> train_patients;
    for (const WsiBag& b : train) train_patients.insert(b.patient_id);
    for (const WsiBag& b : val)
      require(train_patients.count(b.patient_id) == 0, ErrorKind::kValidation,
              "patient " + b.patient_id + " appears in both splits of fold " + std::to_string(k));

    TrainConfig fold_config = config;
    fold_config.seed = config.seed + static_cast<std::uint64_t>(k);
    TrainOptions fold_options = options;
    const std::filesystem::path fold_dir =
        out_dir.empty() ? std::filesystem::path() : out_dir / ("fold" + std::to_string(k));
    fold_options.checkpoint_dir.clear();
    const TrainResult tr = train_fold(train, val, fold_config, fold_options);

    FoldOutcome f;
    f.fold = k;
    f.best_epoch = tr.best.epoch;
    f.best_val_loss = tr.best.val_loss;
    f.log = tr.log;
    f.best = tr.best;
    for (const WsiBag& b : val) {
      const BagGraphs g = build_bag_graphs(b, fold_config.model.neighbors);
      f.val_ids.push_back(b.wsi_id);
      f.sections.push_back(b.section);
      f.labels.push_back(static_cast<int>(b.label));
      f.probs.push_back(predict(g, tr.best.params, fold_config.model).prob_stas);
    }
    if (!fold_dir.empty()) {
      std::filesystem::create_directories(fold_dir);
      f.checkpoint = fold_dir / "best.ckpt";
      save_model(tr.best, f.checkpoint);
      std::ofstream(fold_dir / "log.json") << epoch_log_json(tr.log) << "\n";
      std::ofstream csv(fold_dir / "predictions.csv");
      csv << "wsi_id,section,label,prob_stas\n";
      csv.precision(17);
      for (std::size_t i = 0; i < f.val_ids.size(); ++i)
        csv << f.val_ids[i] << "," << to_string(f.sections[i]) << "," << f.labels[i] << ","
            << f.probs[i] << "\n";
    }
    result.folds.push_back(std::move(f));
  }
  result.sections = summarize_folds(result.folds);
  if (!out_dir.empty()) std::ofstream(out_dir / "summary.json") << cv_summary_json(result) << "\n";
  return result;
}

std::string cv_summary_json(const CvResult& r) {
  json folds = json::array();
  for (const FoldOutcome& f : r.folds)
    folds.push_back({{"fold", f.fold},
                     {"best_epoch", f.best_epoch},
                     {"best_val_loss", num(f.best_val_loss)},
                     {"val_count", f.val_ids.size()},
                     {"checkpoint", f.checkpoint.string()}});
  json sections = json::object();
  for (const SectionSummary& s : r.sections) {
    json per_fold = json::object();
    json agg = json::object();
    for (const auto& [name, values] : s.per_fold) {
      json arr = json::array();
      for (double v : values) arr.push_back(num(v));
      per_fold[name] = arr;
      const MeanSem& ms = s.aggregate.at(name);
      agg[name] = {{"mean", num(ms.mean)}, {"sem", num(ms.sem)}, {"n", ms.n}};
    }
    sections[std::string(to_string(s.section))] = {{"per_fold", per_fold}, {"aggregate", agg}};
  }
  return json{{"folds", folds}, {"sections", sections}}.dump(2);
}

}  // namespace daem
