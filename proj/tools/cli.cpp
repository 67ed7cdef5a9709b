#include "cli.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mutual/agents.hpp"
#include "mutual/error.hpp"
#include "mutual/metrics.hpp"
#include "mutual/server.hpp"

namespace mutual {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::uint64_t seed = 1;
  std::string schema = "default";
  std::string out = "out";
  std::string forms;
};

Schema resolve_schema(const std::string& s) {
  if (s == "default") return default_schema();
  if (s == "small") return load_schema(bundled_data_dir() / "schema_small.json");
  if (!fs::exists(s)) throw DataError("schema file not found: " + s);
  return load_schema(s);
}

SurfaceFormStore resolve_forms(const std::string& path, const Schema& schema) {
  SurfaceFormStore forms = load_surface_forms(path.empty() ? bundled_data_dir() / "surface_forms_default.json" : fs::path(path));
  // Bundled forms cover the default catalog; drop entries a smaller schema lacks.
  if (!path.empty()) {
    forms.check_against(schema);
    return forms;
  }
  SurfaceFormStore kept;
  for (const auto& [id, counts] : forms.all())
    if (schema.find_entity(id))
      for (const auto& [surface, n] : counts) kept.add(id, surface, n);
  return kept;
}

std::vector<Transcript> read_corpus(const std::string& path, const Schema& schema) {
  if (!fs::exists(path)) throw DataError("input not found: " + path);
  return read_transcripts(path, schema);
}

// Appends one run record to <out>/manifest.json.
void write_manifest(const Common& c, const std::string& command, const std::vector<std::string>& args,
                    const std::vector<fs::path>& outputs, json extra = json::object()) {
  const fs::path path = fs::path(c.out) / "manifest.json";
  json m = json::object();
  if (fs::exists(path)) {
    std::ifstream in(path);
    m = json::parse(in, nullptr, false);
    if (m.is_discarded() || !m.is_object()) m = json::object();
  }
  json files = json::array();
  for (const auto& p : outputs) files.push_back(p.filename().string());
  json run{{"command", command}, {"args", args}, {"seed", c.seed}, {"schema", c.schema}, {"outputs", files}};
  run.update(extra);
  m["tool"] = "mutual";
  m["runs"].push_back(run);
  std::ofstream(path) << m.dump(2) << "\n";
}

fs::path out_file(const Common& c, const std::string& name) {
  fs::create_directories(c.out);
  return fs::path(c.out) / name;
}

// Simulated or wall clock for sessions driven from here.
struct Clock {
  bool real = false;
  std::int64_t sim = 0;
  std::chrono::steady_clock::time_point origin = std::chrono::steady_clock::now();

  std::int64_t now() const {
    if (!real) return sim;
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - origin).count();
  }
  void wait_until(std::int64_t t) {
    if (real) {
      std::this_thread::sleep_until(origin + std::chrono::milliseconds(t));
    } else {
      sim = std::max(sim, t);
    }
  }
};

Clock make_clock(const std::string& mode) {
  if (mode != "simulated" && mode != "real") throw UsageError("--clock must be simulated or real");
  return Clock{mode == "real"};
}

// Delivers a logged event to the agents that are bots.
void deliver(const Event& ev, std::array<Agent*, 2> agents) {
  for (Side s : {Side::A, Side::B})
    if (Agent* a = agents[static_cast<std::size_t>(index_of(s))]) a->observe(s == ev.agent ? ev : redact_for_partner(ev));
}

// One bot activation on a live session: paced utterances, then a select.
void bot_turn(LiveSession& session, Side side, std::array<Agent*, 2> agents, Clock& clock, const Lexicon& lexicon,
              Rng& rng, const Pacing& pacing, const std::function<void(const Event&)>& show) {
  Agent& bot = *agents[static_cast<std::size_t>(index_of(side))];
  const AgentTurn turn = bot.act(clock.now(), session.can_select(side, clock.now()));
  const KB& kb = session.scenario().kbs[static_cast<std::size_t>(index_of(side))];
  for (const auto& send : pace_outgoing(turn.utterances, clock.now(), lexicon, kb, rng, pacing)) {
    clock.wait_until(send.typing_ms);
    if (session.check_timeout(clock.now())) return;
    deliver(session.typing(side, clock.now()), agents);
    clock.wait_until(send.send_ms);
    if (session.check_timeout(clock.now())) return;
    const Event& ev = session.utterance(side, send.text, clock.now());
    deliver(ev, agents);
    show(ev);
  }
  if (turn.select && !session.finished() && !session.check_timeout(clock.now())) {
    if (session.select(side, *turn.select, clock.now()).accepted) {
      const Event ev = session.transcript().events.back();
      deliver(ev, agents);
      show(ev);
    }
  }
}

// Bot-vs-bot on the wall clock: pacing delays are really waited out and the
// wall limit, not the turn cap, ends a stalled dialogue.
Transcript realtime_dialogue(Agent& a, Agent& b, const Scenario& scenario, const Lexicon& lexicon, Rng& rng,
                             const Limits& limits, const Pacing& pacing) {
  Clock clock{true};
  LiveSession session(scenario, lexicon, {a.kind(), b.kind()}, clock.now(), limits);
  std::array<Agent*, 2> agents{&a, &b};
  Side side = Side::A;
  while (!session.finished() && !session.check_timeout(clock.now())) {
    try {
      bot_turn(session, side, agents, clock, lexicon, rng, pacing, [](const Event&) {});
    } catch (const std::exception&) {
      session.abandon(side, clock.now());
      break;
    }
    side = other(side);
    clock.wait_until(clock.now() + 200);
  }
  Transcript t = session.transcript();
  t.scenario = scenario;
  return t;
}

struct Models {
  std::unique_ptr<DynoNet> dynonet, stanonet;
};

Models load_models(const Schema& schema, const std::string& dyno, const std::string& stano) {
  Models m;
  if (!dyno.empty()) {
    if (!fs::exists(dyno)) throw DataError("model not found: " + dyno);
    m.dynonet = std::make_unique<DynoNet>(DynoNet::load(schema, dyno));
    if (!m.dynonet->config().dynamic) throw UsageError(dyno + " is a static (stanonet) model; pass it as --stanonet-model");
  }
  if (!stano.empty()) {
    if (!fs::exists(stano)) throw DataError("model not found: " + stano);
    m.stanonet = std::make_unique<DynoNet>(DynoNet::load(schema, stano));
    if (m.stanonet->config().dynamic) throw UsageError(stano + " is a dynamic model; pass it as --model");
  }
  return m;
}

std::string kb_table(const Scenario& sc, Side side, const Schema& schema) {
  std::ostringstream os;
  os << "  #";
  for (const auto& a : sc.attrs) os << " | " << schema.attributes()[static_cast<std::size_t>(a.attribute)].name;
  os << "\n";
  const auto& items = sc.kbs[static_cast<std::size_t>(index_of(side))].items;
  for (std::size_t i = 0; i < items.size(); ++i) {
    os << "  " << i;
    for (EntityIndex e : items[i]) os << " | " << schema.entity(e).canonical;
    os << "\n";
  }
  return os.str();
}

double success_rate(const std::vector<Transcript>& ts) {
  std::size_t ok = 0;
  for (const auto& t : ts) ok += t.outcome == Outcome::success;
  return ts.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(ts.size());
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mutual-friends dialogue toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // shared flags may follow the subcommand
  app.set_config("--config", "", "TOML file with option values (flags take precedence)");
  Common c;
  app.add_option("--seed", c.seed, "Master seed")->capture_default_str();
  app.add_option("--schema", c.schema, "Schema: default, small, or a JSON file")->capture_default_str();
  app.add_option("--out", c.out, "Output directory")->capture_default_str();
  app.add_option("--forms", c.forms, "Surface-form counts JSON (default: bundled)");

  // gen-scenarios
  auto* gen = app.add_subcommand("gen-scenarios", "Write seeded scenarios as JSONL");
  std::size_t gen_n = 100;
  gen->add_option("--n", gen_n, "Number of scenarios")->capture_default_str();

  // selfplay
  auto* sp = app.add_subcommand("selfplay", "Bot-vs-bot dialogues");
  SelfPlayOptions spo;
  std::size_t sp_n = 200;
  std::string sp_scenarios, sp_model, sp_stano, sp_replay, sp_clock = "simulated";
  double sp_temp = -1.0;
  sp->add_option("--a", spo.a, "Agent for side A: rule|dynonet|stanonet|replay")->capture_default_str();
  sp->add_option("--b", spo.b, "Agent for side B")->capture_default_str();
  sp->add_option("--n", sp_n, "Number of dialogues")->capture_default_str();
  sp->add_option("--jobs", spo.jobs, "Parallel dialogues")->capture_default_str();
  sp->add_option("--scenarios", sp_scenarios, "Scenario JSONL (default: generated from --seed)");
  sp->add_option("--model", sp_model, "DynoNet checkpoint");
  sp->add_option("--stanonet-model", sp_stano, "StanoNet checkpoint");
  sp->add_option("--replay", sp_replay, "Transcripts to replay, one per scenario");
  sp->add_option("--temperature", sp_temp, "Sampling temperature of neural agents");
  sp->add_option("--clock", sp_clock, "simulated|real")->capture_default_str();
  sp->add_option("--turn-cap", spo.limits.turn_cap, "Turn cap on the simulated clock")->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "Fit a DynoNet on transcripts");
  std::string tr_in, tr_cfg;
  std::optional<int> tr_hidden, tr_K, tr_epochs, tr_min_epochs, tr_batch, tr_patience;
  std::optional<double> tr_lr;
  bool tr_static = false, tr_no_abs = false, tr_no_early = false;
  tr->add_option("--in", tr_in, "Training transcripts (JSONL)")->required();
  tr->add_option("--model-config", tr_cfg, "Model config JSON");
  tr->add_option("--hidden", tr_hidden, "Hidden and embedding size");
  tr->add_option("--K", tr_K, "Message-passing depth");
  tr->add_option("--epochs", tr_epochs, "Maximum epochs");
  tr->add_option("--min-epochs", tr_min_epochs, "Epochs before early stopping may trigger");
  tr->add_option("--batch", tr_batch, "Minibatch size");
  tr->add_option("--patience", tr_patience, "Early-stopping patience");
  tr->add_option("--lr", tr_lr, "AdaGrad learning rate");
  tr->add_flag("--static", tr_static, "Train a StanoNet (no graph updates)");
  tr->add_flag("--no-abstraction", tr_no_abs, "Entity identity instead of abstraction");
  tr->add_flag("--no-early-stopping", tr_no_early, "Run all epochs");

  // eval
  auto* ev = app.add_subcommand("eval", "Corpus statistics table");
  std::vector<std::string> ev_in;
  std::string ev_model;
  ev->add_option("--in", ev_in, "Transcript JSONL (repeatable; NAME=PATH names a row)")->required();
  ev->add_option("--model", ev_model, "Checkpoint for the loss column");

  // analyze
  auto* an = app.add_subcommand("analyze", "First-mentioned attribute histogram (CSV)");
  std::string an_in;
  an->add_option("--in", an_in, "Transcript JSONL")->required();

  // chat
  auto* ch = app.add_subcommand("chat", "Line-based chat against a bot");
  std::string ch_bot = "rule", ch_model, ch_stano, ch_clock = "simulated", ch_side;
  std::uint64_t ch_index = 0;
  ch->add_option("--bot", ch_bot, "rule|dynonet|stanonet")->capture_default_str();
  ch->add_option("--model", ch_model, "DynoNet checkpoint");
  ch->add_option("--stanonet-model", ch_stano, "StanoNet checkpoint");
  ch->add_option("--clock", ch_clock, "simulated|real")->capture_default_str();
  ch->add_option("--side", ch_side, "A or B (default: drawn from the seed)");
  ch->add_option("--scenario-index", ch_index, "Scenario index under --seed")->capture_default_str();

  // serve
  auto* sv = app.add_subcommand("serve", "Run the chat service");
  ServerOptions svo;
  ServiceConfig svc_cfg;
  std::vector<std::string> sv_mix;
  std::string sv_model, sv_stano, sv_storage = "chat_data";
  sv->add_option("--host", svo.host)->capture_default_str();
  sv->add_option("--port", svo.port)->capture_default_str();
  sv->add_option("--static", svo.static_dir, "Directory of web client assets");
  sv->add_option("--storage", sv_storage, "Transcript and rating store")->capture_default_str();
  sv->add_option("--mix", sv_mix, "Opponent weights KIND=W, e.g. human=1 rule=1");
  sv->add_option("--model", sv_model, "DynoNet checkpoint");
  sv->add_option("--stanonet-model", sv_stano, "StanoNet checkpoint");
  sv->add_option("--time-scale", svc_cfg.time_scale, "Multiplier on bot typing delays")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    const Schema schema = resolve_schema(c.schema);
    const Lexicon lexicon(schema);

    if (gen->parsed()) {
      const auto scenarios = generate_scenarios(schema, gen_n, c.seed);
      for (const auto& s : scenarios) check_scenario(s, schema);
      const auto path = out_file(c, "scenarios.jsonl");
      write_scenarios(scenarios, schema, path);
      out << "wrote " << scenarios.size() << " scenarios to " << path.string() << "\n";
      write_manifest(c, "gen-scenarios", args, {path}, {{"count", scenarios.size()}});
      return 0;
    }

    if (sp->parsed()) {
      const SurfaceFormStore forms = resolve_forms(c.forms, schema);
      const TemplateTable templates = TemplateTable::bundled();
      const Models models = load_models(schema, sp_model, sp_stano);
      AgentResources res;
      res.lexicon = &lexicon;
      res.templates = &templates;
      res.forms = &forms;
      res.dynonet = models.dynonet.get();
      res.stanonet = models.stanonet.get();
      if (sp_temp > 0) res.temperature = sp_temp;
      spo.seed = c.seed;
      std::vector<Transcript> replay;
      std::vector<Scenario> scenarios;
      if (!sp_replay.empty()) {
        replay = read_corpus(sp_replay, schema);
        for (const auto& t : replay) {
          if (!t.scenario) throw DataError("replayed transcript lacks its scenario");
          scenarios.push_back(*t.scenario);
        }
      } else if (!sp_scenarios.empty()) {
        if (!fs::exists(sp_scenarios)) throw DataError("input not found: " + sp_scenarios);
        scenarios = read_scenarios(sp_scenarios, schema);
      } else {
        scenarios = generate_scenarios(schema, sp_n, c.seed);
      }
      if (scenarios.size() > sp_n) scenarios.resize(sp_n);
      if (replay.size() > scenarios.size()) replay.resize(scenarios.size());
      const Clock clock = make_clock(sp_clock);
      std::vector<Transcript> ts;
      if (!clock.real) {
        ts = selfplay(scenarios, res, spo, replay.empty() ? nullptr : &replay);
      } else {
        for (std::size_t i = 0; i < scenarios.size(); ++i) {
          AgentResources r = res;
          if (!replay.empty()) r.replay = &replay[i];
          auto a = make_agent(spo.a, scenarios[i], Side::A, r, Rng::derive(c.seed, 3 * i));
          auto b = make_agent(spo.b, scenarios[i], Side::B, r, Rng::derive(c.seed, 3 * i + 1));
          Rng rng = Rng::derive(c.seed, 3 * i + 2);
          ts.push_back(realtime_dialogue(*a, *b, scenarios[i], lexicon, rng, spo.limits, spo.pacing));
        }
      }
      const auto path = out_file(c, "transcripts.jsonl");
      write_transcripts(ts, schema, path);
      const double rate = success_rate(ts);
      out << spo.a << " vs " << spo.b << ": " << ts.size() << " dialogues, success rate " << rate << "\n";
      write_manifest(c, "selfplay", args, {path}, {{"success_rate", rate}, {"dialogues", ts.size()}});
      return 0;
    }

    if (tr->parsed()) {
      DynoConfig cfg;
      if (!tr_cfg.empty()) {
        std::ifstream f(tr_cfg);
        if (!f) throw DataError("model config not found: " + tr_cfg);
        const json j = json::parse(f, nullptr, false);
        if (j.is_discarded()) throw DataError(tr_cfg + " is not JSON");
        cfg = config_from_json(j);
      }
      if (tr_hidden) cfg.hidden = cfg.emb = *tr_hidden;
      if (tr_K) cfg.K = *tr_K;
      if (tr_epochs) cfg.max_epochs = *tr_epochs;
      if (tr_min_epochs) cfg.min_epochs = *tr_min_epochs;
      if (tr_batch) cfg.batch = *tr_batch;
      if (tr_patience) cfg.patience = *tr_patience;
      if (tr_lr) cfg.lr = *tr_lr;
      if (tr_static) cfg.dynamic = false;
      if (tr_no_abs) cfg.abstraction = false;
      cfg.seed = c.seed;
      const auto corpus = read_corpus(tr_in, schema);
      const Split split = split_corpus(corpus, c.seed);
      if (split.train.empty()) throw DataError("no successful dialogues to train on in " + tr_in);
      const auto train_set = make_examples(split.train), dev_set = make_examples(split.dev),
                 test_set = make_examples(split.test);
      DynoNet model(schema, cfg, build_vocab(corpus, lexicon));
      Rng init(c.seed);
      model.init_params(init);
      const auto curve_path = out_file(c, "curve.csv");
      std::ofstream curve(curve_path);
      curve << "epoch,train_loss,dev_loss\n";
      TrainOptions opts;
      opts.use_early_stopping = !tr_no_early;
      opts.on_epoch = [&](const EpochStats& e) {
        curve << e.epoch << "," << e.train_loss << "," << e.dev_loss << "\n" << std::flush;
        out << "epoch " << e.epoch << " train " << e.train_loss << " dev " << e.dev_loss << "\n" << std::flush;
      };
      const TrainResult r = train(model, train_set, dev_set, lexicon, opts);
      const double test = test_set.empty() ? 0.0 : evaluate_loss(model, test_set, lexicon);
      const auto model_path = out_file(c, "model.json");
      model.save(model_path);
      out << "best epoch " << r.best_epoch << " dev " << r.best_dev << " test " << test << "\n";
      write_manifest(c, "train", args, {model_path, curve_path},
                     {{"best_epoch", r.best_epoch}, {"dev_loss", r.best_dev}, {"test_loss", test},
                      {"config", config_to_json(cfg)}});
      return 0;
    }

    if (ev->parsed()) {
      std::optional<DynoNet> model;
      if (!ev_model.empty()) {
        if (!fs::exists(ev_model)) throw DataError("model not found: " + ev_model);
        model.emplace(DynoNet::load(schema, ev_model));
      }
      std::vector<std::pair<std::string, CorpusStats>> rows;
      json all = json::object();
      for (const auto& spec : ev_in) {
        const auto eq = spec.find('=');
        const std::string name = eq == std::string::npos ? fs::path(spec).stem().string() : spec.substr(0, eq);
        const std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
        const auto corpus = read_corpus(path, schema);
        CorpusStats st = corpus_stats(corpus, schema);
        if (model) {
          std::vector<const Transcript*> ok;
          for (const auto& t : corpus)
            if (t.outcome == Outcome::success) ok.push_back(&t);
          if (!ok.empty()) st.loss = evaluate_loss(*model, make_examples(ok), lexicon);
        }
        all[name] = stats_to_json(st);
        rows.emplace_back(name, st);
      }
      const std::string table = stats_table(rows);
      out << table;
      const auto json_path = out_file(c, "stats.json"), txt_path = out_file(c, "stats.txt");
      std::ofstream(json_path) << all.dump(2) << "\n";
      std::ofstream(txt_path) << table;
      write_manifest(c, "eval", args, {json_path, txt_path});
      return 0;
    }

    if (an->parsed()) {
      const auto corpus = read_corpus(an_in, schema);
      const CorpusStats st = corpus_stats(corpus, schema);
      const std::string csv = first_attr_histogram_csv(st);
      out << csv;
      const auto path = out_file(c, "first_attr.csv");
      std::ofstream(path) << csv;
      write_manifest(c, "analyze", args, {path});
      return 0;
    }

    if (ch->parsed()) {
      const SurfaceFormStore forms = resolve_forms(c.forms, schema);
      const TemplateTable templates = TemplateTable::bundled();
      const Models models = load_models(schema, ch_model, ch_stano);
      AgentResources res{&lexicon, &templates, &forms, models.dynonet.get(), models.stanonet.get(), {}, {}, nullptr};
      const Scenario scenario = generate_indexed_scenario(schema, c.seed, ch_index);
      Rng rng = Rng::derive(c.seed, 1u << 20);
      Side human = rng.bernoulli(0.5) ? Side::A : Side::B;
      if (!ch_side.empty()) {
        if (ch_side != "A" && ch_side != "B") throw UsageError("--side must be A or B");
        human = ch_side == "A" ? Side::A : Side::B;
      }
      const Side bot_side = other(human);
      auto bot = make_agent(ch_bot, scenario, bot_side, res, Rng::derive(c.seed, 1u << 21));
      std::array<Agent*, 2> agents{};
      agents[static_cast<std::size_t>(index_of(bot_side))] = bot.get();
      Clock clock = make_clock(ch_clock);
      std::array<std::string, 2> kinds;
      kinds[static_cast<std::size_t>(index_of(human))] = "human";
      kinds[static_cast<std::size_t>(index_of(bot_side))] = ch_bot;
      LiveSession session(scenario, lexicon, kinds, clock.now(), Limits{});
      const auto show = [&](const Event& e) {
        if (e.kind == EventKind::utterance) out << "partner: " << e.text << "\n";
        if (e.kind == EventKind::select) out << "(partner selected an item)\n";
        out << std::flush;
      };
      out << "You are side " << to_string(human) << ". Your friends:\n" << kb_table(scenario, human, schema)
          << "Type messages; /select N picks row N; /kb shows the table; /quit leaves.\n" << std::flush;
      if (bot_side == Side::A) bot_turn(session, bot_side, agents, clock, lexicon, rng, Pacing{}, show);
      std::string line;
      while (!session.finished() && std::getline(in, line)) {
        if (!clock.real) clock.sim += 1000 + static_cast<std::int64_t>(line.size()) * 1000 / 7;
        if (session.check_timeout(clock.now())) break;
        if (line.empty()) continue;
        if (line == "/quit") {
          session.abandon(human, clock.now());
          break;
        }
        if (line == "/kb") {
          out << kb_table(scenario, human, schema);
          continue;
        }
        if (line.rfind("/select", 0) == 0) {
          int row = -1;
          std::istringstream(line.substr(7)) >> row;
          if (row < 0 || row >= scenario.n_items) {
            out << "no such row\n";
            continue;
          }
          const auto r = session.select(human, row, clock.now());
          if (!r.accepted) {
            out << "too soon: wait " << (r.retry_after_ms + 999) / 1000 << " s\n";
            continue;
          }
          deliver(session.transcript().events.back(), agents);
        } else {
          deliver(session.utterance(human, line, clock.now()), agents);
        }
        if (!session.finished()) bot_turn(session, bot_side, agents, clock, lexicon, rng, Pacing{}, show);
      }
      if (!session.finished()) session.abandon(human, clock.now());
      Transcript t = session.transcript();
      t.scenario = scenario;
      out << "dialogue over: " << to_string(t.outcome) << (t.cause.empty() ? "" : " (" + t.cause + ")") << "\n";
      const auto path = out_file(c, "chat.jsonl");
      write_transcripts({t}, schema, path);
      write_manifest(c, "chat", args, {path}, {{"outcome", to_string(t.outcome)}});
      return 0;
    }

    if (sv->parsed()) {
      if (!sv_mix.empty()) {
        svc_cfg.mix.clear();
        for (const auto& m : sv_mix) {
          const auto eq = m.find('=');
          if (eq == std::string::npos) throw UsageError("--mix entries look like KIND=WEIGHT, got '" + m + "'");
          try {
            svc_cfg.mix[m.substr(0, eq)] = std::stod(m.substr(eq + 1));
          } catch (const std::logic_error&) {
            throw UsageError("bad weight in '" + m + "'");
          }
        }
      }
      svc_cfg.storage = sv_storage;
      svc_cfg.scenario_seed = c.seed;
      const SurfaceFormStore forms = resolve_forms(c.forms, schema);
      const TemplateTable templates = TemplateTable::bundled();
      const Models models = load_models(schema, sv_model, sv_stano);
      AgentResources res{&lexicon, &templates, &forms, models.dynonet.get(), models.stanonet.get(), {}, {}, nullptr};
      ChatService service(schema, res, svc_cfg, c.seed);
      svo.handle_signals = true;
      Server server(service, svo);
      out << "listening on " << svo.host << ":" << server.port() << "\n" << std::flush;
      server.run();
      return 0;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}

}  // namespace mutual
