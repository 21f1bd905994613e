#include "attnamer/bench.hpp"

#include <algorithm>

#include "attnamer/synth.hpp"
#include "json_text.hpp"

namespace attnamer {

namespace {

constexpr std::uint64_t kBaseSeedSalt = 0x9e3779b97f4a7c15ULL;

PopulationSpec cell_population(const BenchSpec& spec, std::size_t n_ids, std::size_t shots) {
  PopulationSpec p;
  p.n_ids = n_ids;
  p.shots_per_id = shots;
  p.d_face = spec.d_face;
  p.d_voice = spec.d_voice;
  p.face_noise = spec.noise;
  p.voice_noise = spec.noise;
  p.queries_per_id = spec.queries_per_id;
  p.distractor_ratio = 0;
  p.seed = spec.seed;
  return p;
}

std::string error_status(const std::exception& e) {
  std::string msg = e.what();
  std::replace(msg.begin(), msg.end(), ',', ';');
  std::replace(msg.begin(), msg.end(), '\n', ' ');
  return "error: " + msg;
}

}  // namespace

std::vector<std::size_t> default_grid_ids() {
  std::vector<std::size_t> ids;
  for (std::size_t n = 5; n <= 50; n += 5) ids.push_back(n);
  for (std::size_t n = 100; n <= 500; n += 50) ids.push_back(n);
  return ids;
}

std::vector<std::size_t> default_grid_shots() { return {5, 50}; }

std::string_view bench_csv_header() {
  return "method,n_ids,shots,d_k,mpa,params_kb,setup_time_s,setup_time_cumulative_s,epochs,status";
}

std::string format_bench_row(const BenchRow& r) {
  std::string out(to_string(r.method));
  out += ',' + std::to_string(r.n_ids) + ',' + std::to_string(r.shots) + ',' +
         std::to_string(r.d_key) + ',';
  if (r.mpa) detail::append_number(out, *r.mpa);
  out.push_back(',');
  detail::append_number(out, r.params_kb);
  out.push_back(',');
  detail::append_number(out, r.setup_time_s);
  out.push_back(',');
  detail::append_number(out, r.setup_time_cumulative_s);
  out.push_back(',');
  if (r.epochs) out += std::to_string(*r.epochs);
  out += ',' + r.status;
  return out;
}

std::vector<BenchRow> run_bench(const BenchSpec& spec,
                                const std::function<void(const BenchRow&)>& on_row) {
  if (spec.grid_ids.empty() || spec.grid_shots.empty() || spec.methods.empty()) {
    throw Error(ErrorCode::InvalidSpec, "bench grid is empty");
  }
  std::vector<std::size_t> ids = spec.grid_ids;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  const bool with_lwf =
      std::find(spec.methods.begin(), spec.methods.end(), Method::Lwf) != spec.methods.end();

  std::vector<BenchRow> rows;
  auto emit = [&](BenchRow row) {
    if (on_row) on_row(row);
    rows.push_back(std::move(row));
  };

  SetupContext ctx;
  ctx.store = StoreConfig{spec.d_face, spec.d_voice, true};
  ctx.train = spec.train;
  ctx.train.seed = spec.seed;
  ctx.repetitions = spec.repetitions;
  const std::size_t d_key = ctx.store.d_key();

  for (std::size_t shots : spec.grid_shots) {
    // LwF chain for this shot count: pretrained trunk, then one head per
    // grid increment.
    BranchedModel chain;
    double cumulative = 0.0;
    std::optional<std::string> chain_error;
    if (with_lwf) {
      try {
        PopulationSpec base = cell_population(spec, spec.lwf_base_ids, shots);
        base.seed = spec.seed ^ kBaseSeedSalt;
        base.label_prefix = "base";
        base.queries_per_id = 0;
        const Population base_pop = generate_population(base);
        SetupContext pre = ctx;
        pre.lwf_base = {};
        const auto outcome = measure_setup(Method::Lwf, base_pop.enrollment, pre);
        chain = outcome.lwf->trunk_only();
        cumulative = outcome.seconds;
      } catch (const std::exception& e) {
        chain_error = error_status(e);
      }
    }

    std::size_t previous = 0;
    for (std::size_t n : ids) {
      std::optional<Population> pop;
      std::string pop_error;
      try {
        pop = generate_population(cell_population(spec, n, shots));
      } catch (const std::exception& e) {
        pop_error = error_status(e);
      }
      for (Method method : spec.methods) {
        BenchRow row;
        row.method = method;
        row.n_ids = n;
        row.shots = shots;
        row.d_key = d_key;
        if (!pop) {
          row.status = pop_error;
          emit(std::move(row));
          continue;
        }
        if (method == Method::Lwf && chain_error) {
          row.status = *chain_error;
          emit(std::move(row));
          continue;
        }
        try {
          SetupContext cell = ctx;
          cell.train.capacity = ids.back();
          if (method == Method::Lwf) {
            cell.lwf_base = chain;
            cell.lwf_first = static_cast<IdentityIndex>(previous);
            cell.lwf_last = static_cast<IdentityIndex>(n);
          }
          const SetupOutcome out = measure_setup(method, pop->enrollment, cell);
          std::vector<PredictionRecord> records;
          switch (method) {
            case Method::Att:
              records = run_stream(out.store, pop->queries, 0.0f);
              row.params_kb = bytes_to_kb(parameter_count(out.store));
              break;
            case Method::Tfs:
              records = run_stream(baseline_predictor(*out.tfs, out.store, 0.0f), pop->queries);
              row.params_kb = bytes_to_kb(parameter_bytes(*out.tfs));
              row.epochs = out.epochs;
              if (out.non_convergence) row.status = "non_convergence";
              break;
            case Method::Lwf:
              records = run_stream(baseline_predictor(*out.lwf, out.store, 0.0f), pop->queries);
              row.params_kb = bytes_to_kb(parameter_bytes(*out.lwf));
              row.epochs = out.epochs;
              chain = *out.lwf;
              cumulative += out.seconds;
              row.setup_time_cumulative_s = cumulative;
              break;
          }
          row.setup_time_s = out.seconds;
          if (method != Method::Lwf) row.setup_time_cumulative_s = out.seconds;
          row.mpa = score_stream(records, pop->queries, out.store.registry(), 1).mpa;
        } catch (const std::exception& e) {
          row.status = error_status(e);
        }
        emit(std::move(row));
      }
      previous = n;
    }
  }
  return rows;
}

}  // namespace attnamer
