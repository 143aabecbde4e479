#include "derl/config.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "derl/errors.hpp"

namespace derl::cli {

using json = nlohmann::json;

namespace {

std::vector<double> number_or_array(const json& j, int n,
                                    const std::string& what) {
  std::vector<double> out;
  if (j.is_number()) {
    out.assign(static_cast<std::size_t>(n), j.get<double>());
  } else if (j.is_array()) {
    out = j.get<std::vector<double>>();
    if (static_cast<int>(out.size()) != n)
      throw ConfigError(what + ": expected " + std::to_string(n) + " entries");
  } else {
    throw ConfigError(what + ": expected number or array");
  }
  return out;
}

template <typename T>
void read_if(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

}  // namespace

ind::IndicatorSpec parse_indicator(const std::string& name) {
  std::size_t split = name.size();
  while (split > 0 && std::isdigit(static_cast<unsigned char>(name[split - 1])))
    --split;
  const std::string head = name.substr(0, split);
  const std::string tail = name.substr(split);
  ind::IndicatorSpec spec;
  spec.kind = ind::kind_from_name(head);
  spec.window = tail.empty() ? 0 : std::stoi(tail);
  switch (spec.kind) {
    case ind::Kind::Sma:
    case ind::Kind::Ema:
    case ind::Kind::Rsi:
    case ind::Kind::Cci:
    case ind::Kind::Adx:
      if (spec.window < 1)
        throw ConfigError("indicator " + name + " needs a window, e.g. " +
                          head + "21");
      break;
    default:
      if (!tail.empty())
        throw ConfigError("indicator " + head + " takes no window suffix");
  }
  return spec;
}

std::vector<ind::IndicatorSpec> RunConfig::indicator_specs() const {
  std::vector<ind::IndicatorSpec> specs;
  for (const auto& name : indicators) {
    if (name == "default") {
      auto d = ind::default_indicator_set();
      specs.insert(specs.end(), d.begin(), d.end());
    } else if (name == "none") {
      // empty block
    } else {
      specs.push_back(parse_indicator(name));
    }
  }
  return specs;
}

RunConfig RunConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

RunConfig RunConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }

  RunConfig cfg;
  try {
    read_if(j, "out_dir", cfg.out_dir);
    if (j.contains("data")) {
      const auto& d = j.at("data");
      read_if(d, "panel_csv", cfg.data.panel_csv);
      read_if(d, "riskfree_csv", cfg.data.riskfree_csv);
      read_if(d, "vix_csv", cfg.data.vix_csv);
      read_if(d, "market_csv", cfg.data.market_csv);
      if (d.contains("state_series")) {
        for (const auto& e : d.at("state_series"))
          cfg.data.state_series.emplace_back(e.at("name").get<std::string>(),
                                             e.at("csv").get<std::string>());
      }
    }
    read_if(j, "universe_size", cfg.universe_size);
    if (j.contains("segments")) {
      for (const auto& s : j.at("segments")) {
        bt::SegmentDates seg;
        seg.train_start =
            data::Date::from_string(s.at("train_start").get<std::string>());
        seg.val_start =
            data::Date::from_string(s.at("val_start").get<std::string>());
        seg.val_end =
            data::Date::from_string(s.at("val_end").get<std::string>());
        cfg.segments.push_back(seg);
      }
    }
    read_if(j, "window_days", cfg.window_days);
    read_if(j, "train_years", cfg.train_years);
    read_if(j, "cost_rate", cfg.cost_rate);
    read_if(j, "risk_free_rate", cfg.risk_free_rate);
    read_if(j, "reward_window", cfg.reward_window);
    read_if(j, "indicators", cfg.indicators);
    if (j.contains("embedding")) {
      const auto& e = j.at("embedding");
      read_if(e, "dim_z", cfg.embedding.dim_z);
      read_if(e, "hidden", cfg.embedding.hidden);
      read_if(e, "lambda", cfg.embedding.lambda);
      read_if(e, "kernel_scale", cfg.embedding.kernel_scale);
      read_if(e, "batch_size", cfg.embedding.batch_size);
      read_if(e, "initial_steps", cfg.embedding.initial_steps);
      read_if(e, "initial_pool", cfg.embedding.initial_pool);
      read_if(e, "learning_rate", cfg.embedding.learning_rate);
    }
    if (j.contains("foml")) {
      const auto& f = j.at("foml");
      read_if(f, "alpha1", cfg.foml_rates.alpha1);
      read_if(f, "beta1", cfg.foml_rates.beta1);
      read_if(f, "alpha2", cfg.foml_rates.alpha2);
      read_if(f, "beta2", cfg.foml_rates.beta2);
      read_if(f, "update_every", cfg.foml_update_every);
      read_if(f, "history", cfg.foml_history);
      read_if(f, "epochs", cfg.foml_epochs);
      read_if(f, "train_fraction", cfg.foml_train_fraction);
    }
    if (j.contains("td3")) {
      const auto& t = j.at("td3");
      read_if(t, "gamma", cfg.td3.gamma);
      read_if(t, "actor_lr", cfg.td3.actor_lr);
      read_if(t, "critic_lr", cfg.td3.critic_lr);
      read_if(t, "tau", cfg.td3.tau);
      read_if(t, "policy_delay", cfg.td3.policy_delay);
      read_if(t, "explore_sigma", cfg.td3.explore_sigma);
      read_if(t, "smooth_sigma", cfg.td3.smooth_sigma);
      read_if(t, "noise_clip", cfg.td3.noise_clip);
      read_if(t, "batch_size", cfg.td3.batch_size);
      read_if(t, "buffer_capacity", cfg.td3.buffer_capacity);
      read_if(t, "warmup_steps", cfg.td3.warmup_steps);
      read_if(t, "hidden", cfg.td3.hidden);
      read_if(t, "train_steps_per_window", cfg.train_steps_per_window);
    }
    if (j.contains("simulate")) {
      const auto& s = j.at("simulate");
      read_if(s, "assets", cfg.simulate.assets);
      read_if(s, "days", cfg.simulate.days);
      if (s.contains("drift"))
        cfg.simulate.drift =
            number_or_array(s.at("drift"), cfg.simulate.assets, "drift");
      if (s.contains("vol"))
        cfg.simulate.vol =
            number_or_array(s.at("vol"), cfg.simulate.assets, "vol");
      read_if(s, "momentum_strength", cfg.simulate.momentum_strength);
      read_if(s, "momentum_window", cfg.simulate.momentum_window);
      read_if(s, "regime_shift_time", cfg.simulate.regime_shift_time);
      read_if(s, "with_market_cap", cfg.simulate.with_market_cap);
    }
    if (j.contains("seeds")) {
      const auto& s = j.at("seeds");
      read_if(s, "data", cfg.seeds.data);
      read_if(s, "wae", cfg.seeds.wae);
      read_if(s, "foml", cfg.seeds.foml);
      read_if(s, "td3", cfg.seeds.td3);
      read_if(s, "backtest", cfg.seeds.backtest);
      read_if(s, "analysis", cfg.seeds.analysis);
    }
    read_if(j, "jobs", cfg.jobs);
    read_if(j, "log_every", cfg.log_every);
    read_if(j, "curve_every", cfg.curve_every);
    read_if(j, "resume_from", cfg.resume_from);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field error: ") + e.what());
  }
  if (cfg.simulate.drift.empty())
    cfg.simulate.drift.assign(static_cast<std::size_t>(cfg.simulate.assets),
                              0.0);
  if (cfg.simulate.vol.empty())
    cfg.simulate.vol.assign(static_cast<std::size_t>(cfg.simulate.assets),
                            0.02);
  return cfg;
}

std::string RunConfig::to_json_text() const {
  json j;
  j["out_dir"] = out_dir;
  j["data"]["panel_csv"] = data.panel_csv;
  j["data"]["riskfree_csv"] = data.riskfree_csv;
  j["data"]["vix_csv"] = data.vix_csv;
  j["data"]["market_csv"] = data.market_csv;
  j["data"]["state_series"] = json::array();
  for (const auto& [name, csv] : data.state_series)
    j["data"]["state_series"].push_back({{"name", name}, {"csv", csv}});
  j["universe_size"] = universe_size;
  j["segments"] = json::array();
  for (const auto& s : segments)
    j["segments"].push_back({{"train_start", s.train_start.to_string()},
                             {"val_start", s.val_start.to_string()},
                             {"val_end", s.val_end.to_string()}});
  j["window_days"] = window_days;
  j["train_years"] = train_years;
  j["cost_rate"] = cost_rate;
  j["risk_free_rate"] = risk_free_rate;
  j["reward_window"] = reward_window;
  j["indicators"] = indicators;
  j["embedding"] = {{"dim_z", embedding.dim_z},
                    {"hidden", embedding.hidden},
                    {"lambda", embedding.lambda},
                    {"kernel_scale", embedding.kernel_scale},
                    {"batch_size", embedding.batch_size},
                    {"initial_steps", embedding.initial_steps},
                    {"initial_pool", embedding.initial_pool},
                    {"learning_rate", embedding.learning_rate}};
  j["foml"] = {{"alpha1", foml_rates.alpha1},   {"beta1", foml_rates.beta1},
               {"alpha2", foml_rates.alpha2},   {"beta2", foml_rates.beta2},
               {"update_every", foml_update_every},
               {"history", foml_history},       {"epochs", foml_epochs},
               {"train_fraction", foml_train_fraction}};
  j["td3"] = {{"gamma", td3.gamma},
              {"actor_lr", td3.actor_lr},
              {"critic_lr", td3.critic_lr},
              {"tau", td3.tau},
              {"policy_delay", td3.policy_delay},
              {"explore_sigma", td3.explore_sigma},
              {"smooth_sigma", td3.smooth_sigma},
              {"noise_clip", td3.noise_clip},
              {"batch_size", td3.batch_size},
              {"buffer_capacity", td3.buffer_capacity},
              {"warmup_steps", td3.warmup_steps},
              {"hidden", td3.hidden},
              {"train_steps_per_window", train_steps_per_window}};
  j["simulate"] = {{"assets", simulate.assets},
                   {"days", simulate.days},
                   {"drift", simulate.drift},
                   {"vol", simulate.vol},
                   {"momentum_strength", simulate.momentum_strength},
                   {"momentum_window", simulate.momentum_window},
                   {"regime_shift_time", simulate.regime_shift_time},
                   {"with_market_cap", simulate.with_market_cap}};
  j["seeds"] = {{"data", seeds.data}, {"wae", seeds.wae},
                {"foml", seeds.foml}, {"td3", seeds.td3},
                {"backtest", seeds.backtest}, {"analysis", seeds.analysis}};
  j["jobs"] = jobs;
  j["log_every"] = log_every;
  j["curve_every"] = curve_every;
  j["resume_from"] = resume_from;
  return j.dump(2);
}

bt::PipelineConfig RunConfig::pipeline() const {
  bt::PipelineConfig p;
  p.segments = segments;
  p.universe_size = universe_size;
  p.window_days = window_days;
  p.train_days = train_years * 252;
  p.cost_rate = cost_rate;
  p.risk_free_rate = risk_free_rate;
  p.reward_window = reward_window;
  p.indicators = indicator_specs();
  p.embedding = embedding;
  p.foml_rates = foml_rates;
  p.stream.stream_size = foml_update_every;
  p.stream.max_history = foml_history;
  p.stream.epochs = foml_epochs;
  p.stream.train_fraction = foml_train_fraction;
  p.td3 = td3;
  p.train_steps_per_window = train_steps_per_window;
  p.jobs = jobs;
  p.log_every = log_every;
  p.curve_every = curve_every;
  p.seed_wae = seeds.wae;
  p.seed_foml = seeds.foml;
  p.seed_td3 = seeds.td3;
  p.seed_backtest = seeds.backtest;
  return p;
}

}  // namespace derl::cli
