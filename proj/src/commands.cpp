#include "attnamer/commands.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <ostream>

#include "CLI11.hpp"
#include "attnamer/knowledge_file.hpp"
#include "attnamer/synth.hpp"
#include "json.hpp"

namespace attnamer {

namespace {

using nlohmann::json;

bool is_input_error(ErrorCode c) {
  switch (c) {
    case ErrorCode::ParseError:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::ZeroVector:
    case ErrorCode::NonFinite:
    case ErrorCode::UnknownIdentity:
      return true;
    default:
      return false;
  }
}

// Maps library errors onto the exit-code table.
template <typename Body>
int guarded(std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    if (e.code() == ErrorCode::EmptyStore) return kExitEmptyStore;
    return is_input_error(e.code()) ? kExitParse : kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

std::vector<std::string> method_names(const std::vector<Method>& methods) {
  std::vector<std::string> out;
  for (Method m : methods) out.emplace_back(to_string(m));
  return out;
}

void append_csv(const std::filesystem::path& path, std::string_view header, const std::string& row) {
  std::error_code ec;
  const bool fresh = !std::filesystem::exists(path, ec) || std::filesystem::file_size(path, ec) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error(ErrorCode::Io, "cannot append to " + path.string());
  if (fresh) out << header << '\n';
  out << row << '\n';
}

std::optional<std::string> label_or_null(const KnowledgeStore& store,
                                         const std::optional<IdentityIndex>& id) {
  if (!id) return std::nullopt;
  return store.registry().label(*id);
}

struct Prepared {
  std::vector<KnowledgeRecord> records;
  StoreConfig store_config;
  WindowStream stream;
};

Prepared prepare(const RunConfig& config) {
  Prepared p;
  p.records = read_knowledge_records(config.knowledge);
  if (p.records.empty()) {
    throw Error(ErrorCode::EmptyStore, config.knowledge.string() + " holds no shots");
  }
  p.store_config = infer_store_config(p.records);
  p.stream = load_manifest(config.manifest, p.store_config.d_face, p.store_config.d_voice);
  return p;
}

struct MethodRun {
  SetupOutcome setup;
  double cumulative = 0.0;
  std::size_t param_bytes = 0;
  std::vector<PredictionRecord> records;
};

MethodRun run_method(Method method, const RunConfig& config, const Prepared& prepared) {
  SetupContext ctx;
  ctx.store = prepared.store_config;
  ctx.train.seed = config.seed;
  ctx.repetitions = config.repetitions;
  auto measure = [&](const SetupContext& c) {
    return config.inclusive_setup ? measure_setup(method, config.knowledge, c)
                                  : measure_setup(method, prepared.records, c);
  };

  MethodRun run;
  if (method == Method::Lwf) {
    // Stage 0 pretrains on the first step of IDs; every later step adds a head.
    const std::size_t step = std::max<std::size_t>(config.lwf_step, 1);
    std::size_t last = step;
    ctx.lwf_first = 0;
    ctx.lwf_last = static_cast<IdentityIndex>(last);
    while (true) {
      run.setup = measure(ctx);
      run.cumulative += run.setup.seconds;
      const std::size_t n = run.setup.store.num_ids();
      if (last >= n) break;
      ctx.lwf_base = *run.setup.lwf;
      ctx.lwf_first = static_cast<IdentityIndex>(last);
      last = std::min(n, last + step);
      ctx.lwf_last = static_cast<IdentityIndex>(last);
    }
  } else {
    run.setup = measure(ctx);
    run.cumulative = run.setup.seconds;
  }

  const KnowledgeStore& store = run.setup.store;
  switch (method) {
    case Method::Att:
      run.records = run_stream(store, prepared.stream, config.tau, config.jobs);
      run.param_bytes = parameter_count(store);
      break;
    case Method::Tfs:
      run.records = run_stream(baseline_predictor(*run.setup.tfs, store, config.tau),
                               prepared.stream, config.jobs);
      run.param_bytes = parameter_bytes(*run.setup.tfs);
      break;
    case Method::Lwf:
      run.records = run_stream(baseline_predictor(*run.setup.lwf, store, config.tau),
                               prepared.stream, config.jobs);
      run.param_bytes = parameter_bytes(*run.setup.lwf);
      break;
  }
  return run;
}

Method single_method(const RunConfig& config) {
  if (config.methods.size() != 1) {
    throw Error(ErrorCode::InvalidSpec, "exactly one --method is required here");
  }
  return config.methods.front();
}

}  // namespace

std::string to_json(const RunConfig& c) {
  json j;
  j["subcommand"] = c.subcommand;
  j["knowledge"] = c.knowledge.string();
  j["manifest"] = c.manifest.string();
  j["additions"] = c.additions.string();
  j["csv"] = c.csv ? json(c.csv->string()) : json(nullptr);
  j["tau"] = c.tau;
  j["factor"] = c.factor;
  j["methods"] = method_names(c.methods);
  j["grid_ids"] = c.grid_ids;
  j["grid_shots"] = c.grid_shots;
  j["seed"] = c.seed;
  j["jobs"] = c.jobs;
  j["inclusive_setup"] = c.inclusive_setup;
  j["lwf_step"] = c.lwf_step;
  j["repetitions"] = c.repetitions;
  j["n_ids"] = c.n_ids;
  j["shots"] = c.shots;
  j["d_face"] = c.d_face;
  j["d_voice"] = c.d_voice;
  j["noise"] = c.noise;
  j["nonmatched"] = c.nonmatched;
  j["distractors"] = c.distractors;
  j["queries"] = c.queries;
  j["faces_per_window"] = c.faces_per_window;
  return j.dump();
}

RunConfig run_config_from_json(const std::string& text) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::ParseError, "config is not a JSON object");
  RunConfig c;
  try {
    c.subcommand = j.at("subcommand").get<std::string>();
    c.knowledge = j.at("knowledge").get<std::string>();
    c.manifest = j.at("manifest").get<std::string>();
    c.additions = j.at("additions").get<std::string>();
    if (!j.at("csv").is_null()) c.csv = j.at("csv").get<std::string>();
    c.tau = j.at("tau").get<float>();
    c.factor = j.at("factor").get<std::size_t>();
    c.methods.clear();
    for (const auto& m : j.at("methods")) {
      auto parsed = parse_method(m.get<std::string>());
      if (!parsed) throw Error(ErrorCode::ParseError, "unknown method " + m.dump());
      c.methods.push_back(*parsed);
    }
    c.grid_ids = j.at("grid_ids").get<std::vector<std::size_t>>();
    c.grid_shots = j.at("grid_shots").get<std::vector<std::size_t>>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.jobs = j.at("jobs").get<std::size_t>();
    c.inclusive_setup = j.at("inclusive_setup").get<bool>();
    c.lwf_step = j.at("lwf_step").get<std::size_t>();
    c.repetitions = j.at("repetitions").get<std::size_t>();
    c.n_ids = j.at("n_ids").get<std::size_t>();
    c.shots = j.at("shots").get<std::size_t>();
    c.d_face = j.at("d_face").get<std::size_t>();
    c.d_voice = j.at("d_voice").get<std::size_t>();
    c.noise = j.at("noise").get<double>();
    c.nonmatched = j.at("nonmatched").get<std::size_t>();
    c.distractors = j.at("distractors").get<std::size_t>();
    c.queries = j.at("queries").get<std::size_t>();
    c.faces_per_window = j.at("faces_per_window").get<std::size_t>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  return c;
}

int cmd_enroll(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto additions = read_knowledge_records(config.additions);
    std::error_code ec;
    const bool existing = std::filesystem::exists(config.knowledge, ec) &&
                          std::filesystem::file_size(config.knowledge, ec) > 0;
    std::vector<KnowledgeRecord> current;
    if (existing) current = read_knowledge_records(config.knowledge);
    StoreConfig sc = infer_store_config(current.empty() ? additions : current);
    KnowledgeStore store(sc);
    enroll_records(store, current);
    enroll_records(store, additions);
    save_knowledge_atomic(config.knowledge, store);

    const auto counts = store.shots_per_identity();
    for (std::size_t i = 0; i < counts.size(); ++i) {
      out << store.registry().label(static_cast<IdentityIndex>(i)) << '\t' << counts[i] << '\n';
    }
    const auto bytes = parameter_count(store);
    out << "ids " << store.num_ids() << ", shots " << store.num_shots() << ", parameters "
        << bytes << " bytes (" << bytes_to_kb(bytes) << " KB)\n";
    return kExitOk;
  });
}

int cmd_predict(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Method method = single_method(config);
    const Prepared prepared = prepare(config);
    const MethodRun run = run_method(method, config, prepared);
    const KnowledgeStore& store = run.setup.store;
    if (config.factor <= 1) {
      for (const auto& r : run.records) {
        json j;
        j["window"] = r.window_index;
        j["speaker"] = label_or_null(store, r.speaker) ? json(*label_or_null(store, r.speaker)) : json(nullptr);
        j["confidence"] = r.confidence;
        out << j.dump() << '\n';
      }
    } else {
      for (const auto& s : aggregate(run.records, config.factor, prepared.stream.windows,
                                     prepared.stream.base_window)) {
        json j;
        j["t_start"] = s.t_start;
        j["t_end"] = s.t_end;
        j["windows"] = s.group_size;
        j["speaker"] = label_or_null(store, s.winner) ? json(*label_or_null(store, s.winner)) : json(nullptr);
        out << j.dump() << '\n';
      }
    }
    return kExitOk;
  });
}

int cmd_eval(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Method method = single_method(config);
    const Prepared prepared = prepare(config);
    const MethodRun run = run_method(method, config, prepared);
    const KnowledgeStore& store = run.setup.store;
    const StreamScores scores =
        score_stream(run.records, prepared.stream, store.registry(), config.factor);

    EvalReport report;
    report.method = method;
    report.mpa = scores.mpa;
    report.sna = scores.sna;
    report.params_kb = bytes_to_kb(run.param_bytes);
    report.setup_time_s = run.setup.seconds;
    report.setup_time_cumulative_s = run.cumulative;
    report.n_ids = store.num_ids();
    report.shots = store.num_shots();
    report.d_key = store.d_key();
    report.tau = config.tau;
    report.factor = std::max<std::size_t>(config.factor, 1);
    report.windows = scores.windows;
    report.matched_windows = scores.matched_windows;
    report.spans = scores.spans;
    if (method != Method::Att) {
      report.epochs = run.setup.epochs;
      report.non_convergence = run.setup.non_convergence;
      if (run.setup.non_convergence) err << "warning: training did not converge\n";
    }
    out << to_json(report) << '\n';
    if (config.csv) append_csv(*config.csv, eval_csv_header(), csv_row(report));
    return kExitOk;
  });
}

int cmd_bench(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    BenchSpec spec;
    spec.grid_ids = config.grid_ids;
    spec.grid_shots = config.grid_shots;
    spec.methods = config.methods;
    spec.d_face = config.d_face;
    spec.d_voice = config.d_voice;
    spec.noise = config.noise;
    spec.queries_per_id = config.queries;
    spec.repetitions = config.repetitions;
    spec.seed = config.seed;

    std::ofstream file;
    if (config.csv) {
      file.open(*config.csv, std::ios::trunc);
      if (!file) throw Error(ErrorCode::Io, "cannot write " + config.csv->string());
      file << bench_csv_header() << '\n' << std::flush;
    }
    out << bench_csv_header() << '\n' << std::flush;
    bool failed = false;
    run_bench(spec, [&](const BenchRow& row) {
      const std::string line = format_bench_row(row);
      out << line << '\n' << std::flush;
      if (file.is_open()) file << line << '\n' << std::flush;
      if (row.failed()) {
        failed = true;
        err << "cell " << to_string(row.method) << " N=" << row.n_ids << " shots=" << row.shots
            << " failed: " << row.status << '\n';
      }
    });
    return failed ? kExitBenchCell : kExitOk;
  });
}

int cmd_synth(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    PopulationSpec spec;
    spec.n_ids = config.n_ids;
    spec.shots_per_id = config.shots;
    spec.d_face = config.d_face;
    spec.d_voice = config.d_voice;
    spec.face_noise = config.noise;
    spec.voice_noise = config.noise;
    spec.nonmatched_per_shot = config.n_ids > 1 ? config.nonmatched : 0;
    spec.distractor_ratio = config.n_ids > 1 ? config.distractors : 0;
    spec.queries_per_id = config.queries;
    spec.faces_per_window = config.faces_per_window;
    spec.seed = config.seed;
    const Population pop = generate_population(spec);
    save_knowledge_atomic(config.knowledge, pop.store);
    save_manifest_atomic(config.manifest, pop.queries);
    out << "wrote " << pop.store.num_shots() << " shots for " << pop.store.num_ids() << " IDs to "
        << config.knowledge.string() << " and " << pop.queries.windows.size() << " windows to "
        << config.manifest.string() << '\n';
    return kExitOk;
  });
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gradient-free speaker naming over face/voice embeddings"};
  app.require_subcommand(1);

  RunConfig enroll, predict, eval, bench, synth;
  enroll.subcommand = "enroll";
  predict.subcommand = "predict";
  eval.subcommand = "eval";
  bench.subcommand = "bench";
  synth.subcommand = "synth";
  bench.methods = {Method::Att, Method::Tfs, Method::Lwf};
  {
    const BenchSpec defaults;
    bench.d_face = defaults.d_face;
    bench.d_voice = defaults.d_voice;
    bench.noise = defaults.noise;
  }

  std::string seed_text;
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", seed_text, "RNG seed (falls back to ATTNAMER_SEED, then 0)");
  };
  std::vector<std::string> methods_text;
  auto add_methods = [&](CLI::App* sub) {
    sub->add_option("--method", methods_text, "att, tfs or lwf")
        ->delimiter(',')
        ->check(CLI::IsMember({"att", "tfs", "lwf"}));
  };
  auto add_inference = [&](CLI::App* sub, RunConfig& c) {
    sub->add_option("--knowledge", c.knowledge, "knowledge file (JSON Lines)")->required();
    sub->add_option("--manifest", c.manifest, "window manifest (JSON Lines)")->required();
    sub->add_option("--tau", c.tau, "confidence threshold")->capture_default_str();
    sub->add_option("--factor", c.factor, "base windows per aggregated span")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--jobs", c.jobs, "worker threads for inference")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--lwf-step", c.lwf_step, "IDs per LwF stage")->check(CLI::PositiveNumber);
    sub->add_option("--reps", c.repetitions, "setup timing repetitions (min 3)");
    sub->add_option_function<std::string>(
           "--setup-accounting",
           [&c](const std::string& v) { c.inclusive_setup = v == "inclusive"; },
           "inclusive (time file loading) or exclusive")
        ->check(CLI::IsMember({"inclusive", "exclusive"}));
    add_methods(sub);
    add_seed(sub);
  };

  auto* s_enroll = app.add_subcommand("enroll", "append shots to a knowledge file");
  s_enroll->add_option("--knowledge", enroll.knowledge, "knowledge file, created if absent")
      ->required();
  s_enroll->add_option("--additions", enroll.additions, "records to append")
      ->required()
      ->check(CLI::ExistingFile);

  auto* s_predict = app.add_subcommand("predict", "name the speaker of each window (JSON Lines)");
  add_inference(s_predict, predict);
  auto* s_eval = app.add_subcommand("eval", "score a labeled manifest; one JSON report");
  add_inference(s_eval, eval);
  s_eval->add_option("--csv", eval.csv, "append the report as a CSV row");

  auto* s_bench = app.add_subcommand("bench", "IDs x shots grid for att, tfs and lwf (CSV)");
  s_bench->add_option("--grid-ids", bench.grid_ids, "ID counts")->delimiter(',');
  s_bench->add_option("--grid-shots", bench.grid_shots, "shots per ID")->delimiter(',');
  s_bench->add_option("--csv", bench.csv, "also write the CSV here, row by row");
  s_bench->add_option("--d-face", bench.d_face)->capture_default_str();
  s_bench->add_option("--d-voice", bench.d_voice)->capture_default_str();
  s_bench->add_option("--noise", bench.noise, "angular noise (radians)")->capture_default_str();
  s_bench->add_option("--queries", bench.queries, "held-out windows per ID")->capture_default_str();
  s_bench->add_option("--reps", bench.repetitions, "setup timing repetitions (min 3)");
  s_bench->add_option("--jobs", bench.jobs, "accepted; timed cells always run one at a time");
  add_methods(s_bench);
  add_seed(s_bench);

  auto* s_synth = app.add_subcommand("synth", "write a synthetic knowledge file and manifest");
  s_synth->add_option("--knowledge", synth.knowledge)->required();
  s_synth->add_option("--manifest", synth.manifest)->required();
  s_synth->add_option("--ids", synth.n_ids)->check(CLI::PositiveNumber)->capture_default_str();
  s_synth->add_option("--shots", synth.shots)->capture_default_str();
  s_synth->add_option("--d-face", synth.d_face)->capture_default_str();
  s_synth->add_option("--d-voice", synth.d_voice)->capture_default_str();
  s_synth->add_option("--noise", synth.noise, "angular noise (radians)")->capture_default_str();
  s_synth->add_option("--nonmatched", synth.nonmatched, "non-matched enrollment shots per matched shot")
      ->capture_default_str();
  s_synth->add_option("--distractors", synth.distractors, "non-matched windows per matched window")
      ->capture_default_str();
  s_synth->add_option("--queries", synth.queries, "matched windows per ID")->capture_default_str();
  s_synth->add_option("--faces", synth.faces_per_window, "faces per window")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  add_seed(s_synth);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitFailure;
  }

  std::uint64_t seed = 0;
  if (seed_text.empty()) {
    if (const char* env = std::getenv("ATTNAMER_SEED")) seed_text = env;
  }
  if (!seed_text.empty()) {
    auto [ptr, ec] = std::from_chars(seed_text.data(), seed_text.data() + seed_text.size(), seed);
    if (ec != std::errc{} || ptr != seed_text.data() + seed_text.size()) {
      err << "error: seed '" << seed_text << "' is not an unsigned integer\n";
      return kExitFailure;
    }
  }
  auto finish = [&](RunConfig& c) -> RunConfig& {
    c.seed = seed;
    if (!methods_text.empty()) {
      c.methods.clear();
      for (const auto& m : methods_text) c.methods.push_back(*parse_method(m));
    }
    return c;
  };

  if (s_enroll->parsed()) return cmd_enroll(finish(enroll), out, err);
  if (s_predict->parsed()) return cmd_predict(finish(predict), out, err);
  if (s_eval->parsed()) return cmd_eval(finish(eval), out, err);
  if (s_bench->parsed()) return cmd_bench(finish(bench), out, err);
  return cmd_synth(finish(synth), out, err);
}

}  // namespace attnamer
