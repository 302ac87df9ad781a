#include "advp/harness/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "advp/advdual/adversarial.hpp"
#include "advp/rlcore/ppo.hpp"

namespace advp::harness {

namespace fs = std::filesystem;
using envgen::Split;

EvalSummary evaluate_policy(const nets::Agent& agent, const envgen::GridFamily& family,
                            Split split, std::size_t n_episodes, Rng& rng, double discount) {
  if (n_episodes == 0) throw std::invalid_argument("evaluate_policy: n_episodes must be positive");
  if (!(discount > 0.0 && discount <= 1.0))
    throw std::invalid_argument("evaluate_policy: discount must lie in (0, 1]");
  std::vector<std::size_t> levels(n_episodes);
  for (auto& l : levels) l = envgen::sample_level(family.levels(), split, rng);

  constexpr std::size_t kBatch = 256;
  const std::size_t d = family.obs_dim();
  std::vector<double> returns(n_episodes, 0.0);
  for (std::size_t begin = 0; begin < n_episodes; begin += kBatch) {
    const std::size_t n = std::min(kBatch, n_episodes - begin);
    std::vector<envgen::GridEnv> envs;
    envs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) envs.push_back(family.make_env(levels[begin + i]));
    std::vector<std::size_t> active(n);
    for (std::size_t i = 0; i < n; ++i) active[i] = i;
    double weight = 1.0;
    while (!active.empty()) {
      NArray obs(Shape{active.size(), d});
      for (std::size_t k = 0; k < active.size(); ++k)
        envs[active[k]].observe(obs.values().subspan(k * d, d));
      const rl::Evaluation ev = rl::evaluate(agent, obs);
      std::vector<std::size_t> still;
      for (std::size_t k = 0; k < active.size(); ++k) {
        const std::size_t a = nets::greedy_action(ev.log_probs.values().subspan(
            k * ev.log_probs.dim(1), ev.log_probs.dim(1)));
        const envgen::StepResult r = envs[active[k]].step(a);
        returns[begin + active[k]] += weight * r.reward;
        if (!r.done) still.push_back(active[k]);
      }
      active.swap(still);
      weight *= discount;
    }
  }
  EvalSummary s;
  s.episodes = n_episodes;
  // Shifted by the first return so identical returns give exactly zero spread.
  const double n = static_cast<double>(n_episodes);
  const double shift = returns.front();
  double sum = 0.0, sq = 0.0;
  for (double r : returns) {
    sum += r - shift;
    sq += (r - shift) * (r - shift);
  }
  s.mean = shift + sum / n;
  s.std = std::sqrt(std::max(0.0, sq / n - (sum / n) * (sum / n)));
  return s;
}

namespace {

std::size_t draw_index(std::size_t n, Rng& rng) {
  return std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
}

}  // namespace

ProbeResult robustness_probe(const nets::Agent& agent, const envgen::GridFamily& family,
                             Split split, std::size_t n_states, std::size_t n_pairs, Rng& rng) {
  if (n_states == 0 || n_pairs == 0)
    throw std::invalid_argument("robustness_probe: needs at least one state and one pair");
  if (family.config().semantic_variation)
    throw std::invalid_argument(
        "robustness_probe: the family varies its layout with the level; probe a family with "
        "env.semantic_variation = false");
  const envgen::LevelFamily& lf = family.levels();
  const std::size_t pool = split == Split::train ? lf.train_indices().size() : lf.universe_size();
  if (pool < 2) throw std::invalid_argument("robustness_probe: the split has a single level");

  const std::size_t rows = n_states * n_pairs, d = family.obs_dim();
  NArray a(Shape{rows, d}), b(Shape{rows, d});
  const envgen::RenderSpec& spec = family.config().render;
  std::size_t row = 0;
  for (std::size_t s = 0; s < n_states; ++s) {
    envgen::SemanticState u;
    u.layout = family.layout(0);
    std::vector<std::size_t> cells;
    for (std::size_t c = 0; c < u.layout->size(); ++c)
      if (u.layout->at(c) != envgen::Cell::obstacle && u.layout->at(c) != envgen::Cell::goal)
        cells.push_back(c);
    u.agent = cells[draw_index(cells.size(), rng)];
    for (std::size_t p = 0; p < n_pairs; ++p, ++row) {
      const std::size_t m = envgen::sample_level(lf, split, rng);
      std::size_t m2 = envgen::sample_level(lf, split, rng);
      while (m2 == m) m2 = envgen::sample_level(lf, split, rng);
      envgen::render_into(u, m, spec, a.values().subspan(row * d, d));
      envgen::render_into(u, m2, spec, b.values().subspan(row * d, d));
    }
  }
  const NArray pa = rl::evaluate(agent, a).log_probs;
  const NArray pb = rl::evaluate(agent, b).log_probs;
  ProbeResult out;
  out.triples = rows;
  for (std::size_t r = 0; r < rows; ++r) {
    double kl = 0.0;
    for (std::size_t c = 0; c < pa.dim(1); ++c)
      kl += std::exp(pa.at(r, c)) * (pa.at(r, c) - pb.at(r, c));
    out.mean += kl;
    out.max = std::max(out.max, kl);
  }
  out.mean /= static_cast<double>(rows);
  return out;
}

envgen::GridFamilyConfig probe_family_config(const envgen::GridFamilyConfig& env) {
  envgen::GridFamilyConfig out = env;
  out.semantic_variation = false;
  return out;
}

Session::Session(RunConfig cfg)
    : config((cfg.validate(), std::move(cfg))),
      family(config.env),
      probe_family(probe_family_config(config.env)),
      trainer(family, config.net_config(), config.dual_config()) {
  progress.next_eval = config.eval_interval;
}

namespace {

std::string agent_key(int id) { return "agent" + std::to_string(id); }

std::vector<std::uint32_t> to_words(const std::vector<std::size_t>& v) {
  return {v.begin(), v.end()};
}

std::vector<double> loss_fields(const adv::AdvLossReport& r) {
  return {r.l_rl, r.d_own, r.d_other, r.l_kl, r.entropy, r.clip_fraction};
}

void set_loss_fields(adv::AdvLossReport& r, std::span<const double> v) {
  r.l_rl = v[0];
  r.d_own = v[1];
  r.d_other = v[2];
  r.l_kl = v[3];
  r.entropy = v[4];
  r.clip_fraction = v[5];
}

}  // namespace

Checkpoint Session::checkpoint() const {
  Checkpoint ck;
  ck.version = config.checkpoint_version;
  ck.config_hash = config_hash(config);
  RunConfig stored = config;
  stored.output_dir = RunConfig{}.output_dir;  // runs may be moved or resumed elsewhere
  ck.put_text("meta.config", to_text(stored));
  const adv::DualTrainer& tr = trainer;
  for (int id : {1, 2})
    for (const Parameter* p : trainer.pair().get(id).parameters()) ck.put("param/" + p->name, p->value);
  for (const auto& [name, mom] : trainer.pair().adam.moments) {
    ck.put("adam.m/" + name, mom.m);
    ck.put("adam.v/" + name, mom.v);
    ck.put_u64("adam.step/" + name, mom.step);
  }
  for (int id : {1, 2}) {
    const std::string k = agent_key(id);
    ck.put_words("rng." + k, save_rng(tr.rng(id)));
    const envgen::EnvPool::Snapshot s = tr.pool(id).snapshot();
    ck.put_words("pool." + k + ".level", to_words(s.level));
    ck.put_words("pool." + k + ".agent", to_words(s.agent));
    ck.put_words("pool." + k + ".t", to_words(s.t));
    ck.put("pool." + k + ".running_return", NArray::vector(s.running_return));
    for (std::size_t i = 0; i < s.rng.size(); ++i)
      ck.put_words("pool." + k + ".rng." + std::to_string(i), s.rng[i]);
    ck.put("progress.last_loss." + k, NArray::vector(loss_fields(progress.last_loss[id - 1])));
  }
  ck.put_u64("trainer.steps", trainer.steps());
  ck.put_u64("progress.next_eval", progress.next_eval);
  ck.put_u64("progress.eval_scheduled", progress.eval_scheduled ? 1 : 0);
  return ck;
}

void Session::restore_parameters(const Checkpoint& ck) {
  for (int id : {1, 2})
    for (Parameter* p : trainer.pair().get(id).parameters()) {
      NArray v = ck.get_array("param/" + p->name);
      if (v.shape() != p->value.shape())
        throw CheckpointError("parameter '" + p->name + "' has shape " + shape_string(v.shape()) +
                              ", expected " + shape_string(p->value.shape()));
      p->value = std::move(v);
    }
}

void Session::restore(const Checkpoint& ck) {
  if (ck.config_hash != config_hash(config))
    throw ConfigError("checkpoint was written under a different configuration");
  restore_parameters(ck);
  rl::AdamState& adam = trainer.pair().adam;
  adam.moments.clear();
  const std::string step_prefix = "adam.step/";
  for (const Record& r : ck.records()) {
    if (r.name.rfind(step_prefix, 0) != 0) continue;
    const std::string name = r.name.substr(step_prefix.size());
    rl::AdamMoments mom;
    mom.m = ck.get_array("adam.m/" + name);
    mom.v = ck.get_array("adam.v/" + name);
    mom.step = ck.get_u64(r.name);
    adam.moments.emplace(name, std::move(mom));
  }
  for (int id : {1, 2}) {
    const std::string k = agent_key(id);
    trainer.rng(id) = load_rng(ck.get_words("rng." + k));
    envgen::EnvPool& pool = trainer.pool(id);
    envgen::EnvPool::Snapshot s;
    for (auto [field, dst] : {std::pair{".level", &s.level}, {".agent", &s.agent}, {".t", &s.t}}) {
      const auto w = ck.get_words("pool." + k + field);
      dst->assign(w.begin(), w.end());
    }
    const NArray rr = ck.get_array("pool." + k + ".running_return");
    s.running_return.assign(rr.values().begin(), rr.values().end());
    for (std::size_t i = 0; i < pool.size(); ++i)
      s.rng.push_back(ck.get_words("pool." + k + ".rng." + std::to_string(i)));
    pool.restore(s);
    const NArray loss = ck.get_array("progress.last_loss." + k);
    if (loss.size() != 6) throw CheckpointError("progress.last_loss." + k + ": expected 6 values");
    set_loss_fields(progress.last_loss[id - 1], loss.values());
  }
  trainer.set_steps(ck.get_u64("trainer.steps"));
  progress.next_eval = ck.get_u64("progress.next_eval");
  progress.eval_scheduled = ck.get_u64("progress.eval_scheduled") != 0;
}

std::unique_ptr<Session> open_checkpoint(const Checkpoint& ck, bool full_state) {
  RunConfig cfg = parse_config(ck.get_text("meta.config"));
  auto session = std::make_unique<Session>(std::move(cfg));
  if (full_state)
    session->restore(ck);
  else
    session->restore_parameters(ck);
  return session;
}

std::uint64_t eval_seed(std::uint64_t agent_seed, std::size_t step, Split split) {
  return hash_seed(hash_seed(agent_seed, 0xe7a1), step, split == Split::train ? 0 : 1);
}

std::uint64_t probe_seed(std::uint64_t agent_seed, std::size_t step, Split split) {
  return hash_seed(hash_seed(agent_seed, 0x9b0e), step, split == Split::train ? 0 : 1);
}

std::string checkpoint_path(const std::string& output_dir, std::size_t step) {
  return (fs::path(output_dir) / "checkpoints" / ("step_" + std::to_string(step) + ".advp"))
      .string();
}

std::string final_checkpoint_path(const std::string& output_dir) {
  return (fs::path(output_dir) / "checkpoints" / "final.advp").string();
}

namespace {

std::vector<MetricRow> evaluate_rows(const Session& s) {
  std::vector<MetricRow> rows;
  const RunConfig& cfg = s.config;
  const std::size_t step = s.trainer.steps();
  for (int id : {1, 2}) {
    const nets::Agent& agent = s.trainer.pair().get(id);
    const adv::AdvLossReport& loss = s.progress.last_loss[id - 1];
    for (Split split : {Split::train, Split::full}) {
      Rng erng(eval_seed(cfg.agent_seed(id), step, split));
      const EvalSummary ev = evaluate_policy(agent, s.family, split, cfg.eval_episodes, erng);
      double probe = 0.0;
      if (cfg.probe_states > 0 && cfg.probe_pairs > 0) {
        Rng prng(probe_seed(cfg.agent_seed(id), step, split));
        probe = robustness_probe(agent, s.probe_family, split, cfg.probe_states, cfg.probe_pairs, prng)
                    .mean;
      }
      MetricRow r;
      r.step = step;
      r.agent = id;
      r.split = split;
      r.mean_return = ev.mean;
      r.std_return = ev.std;
      r.l_rl = loss.l_rl;
      r.d_own = loss.d_own;
      r.d_other = loss.d_other;
      r.l_kl = loss.l_kl;
      r.entropy = loss.entropy;
      r.clip_fraction = loss.clip_fraction;
      r.kl_probe = probe;
      rows.push_back(r);
    }
  }
  return rows;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("write failed on '" + path.string() + "'");
}

}  // namespace

TrainResult run_train(const RunConfig& config, const TrainOptions& options) {
  Session s(config);
  const fs::path dir(config.output_dir);
  fs::create_directories(dir / "checkpoints");
  TrainResult result;
  result.metrics_path = (dir / "metrics.csv").string();
  auto log = [&](const std::string& msg) {
    if (options.log) options.log(msg);
  };

  if (!options.resume.empty()) {
    const Checkpoint ck = load_checkpoint(options.resume);
    s.restore(ck);
    const std::size_t k = s.trainer.steps();
    const bool keep_k = s.progress.eval_scheduled;
    if (fs::exists(result.metrics_path))
      filter_metrics(result.metrics_path,
                     [&](const MetricRow& r) { return r.step < k || (r.step == k && keep_k); });
    log("resumed from " + options.resume + " at step " + std::to_string(k));
  }
  write_text(dir / "config.txt", to_text(s.config));
  MetricWriter writer(result.metrics_path, options.resume.empty());

  const std::size_t ckpt_every = config.checkpoint_interval;
  auto next_multiple = [](std::size_t step, std::size_t every) { return (step / every + 1) * every; };
  std::size_t next_ckpt = ckpt_every ? next_multiple(s.trainer.steps(), ckpt_every) : 0;

  while (!s.trainer.finished()) {
    std::vector<adv::UpdateRecord> records;
    try {
      records = s.trainer.iterate();
    } catch (const NonFiniteError&) {
      save_checkpoint((dir / "checkpoints" / "nonfinite.advp").string(), s.checkpoint());
      throw;
    }
    for (const adv::UpdateRecord& rec : records) s.progress.last_loss[rec.agent - 1] = rec.loss;
    const std::size_t step = s.trainer.steps();
    s.progress.eval_scheduled = step >= s.progress.next_eval;
    if (s.progress.eval_scheduled || s.trainer.finished()) {
      for (const MetricRow& r : evaluate_rows(s)) {
        writer.write(r);
        result.rows.push_back(r);
      }
      log("step " + std::to_string(step) + ": evaluated");
    }
    if (s.progress.eval_scheduled) s.progress.next_eval = next_multiple(step, config.eval_interval);
    if (ckpt_every && step >= next_ckpt) {
      save_checkpoint(checkpoint_path(config.output_dir, step), s.checkpoint());
      next_ckpt = next_multiple(step, ckpt_every);
    }
  }
  result.checkpoint_path = final_checkpoint_path(config.output_dir);
  save_checkpoint(result.checkpoint_path, s.checkpoint());
  result.steps = s.trainer.steps();
  return result;
}

std::array<EvalSummary, 2> run_eval(const std::string& checkpoint_path, Split split,
                                    std::size_t n_episodes, Rng& rng, double discount) {
  if (n_episodes == 0) throw std::invalid_argument("run_eval: n_episodes must be positive");
  const auto s = open_checkpoint(load_checkpoint(checkpoint_path));
  std::array<EvalSummary, 2> out;
  for (int id : {1, 2})
    out[id - 1] = evaluate_policy(s->trainer.pair().get(id), s->family, split, n_episodes, rng,
                                  discount);
  return out;
}

std::array<ProbeResult, 2> run_probe(const std::string& checkpoint_path, Split split,
                                     std::size_t n_states, std::size_t n_pairs, Rng& rng) {
  const auto s = open_checkpoint(load_checkpoint(checkpoint_path));
  std::array<ProbeResult, 2> out;
  for (int id : {1, 2})
    out[id - 1] = robustness_probe(s->trainer.pair().get(id), s->probe_family, split, n_states,
                                   n_pairs, rng);
  return out;
}

}  // namespace advp::harness
