// bunet: command-line front end for spec generation, key and dealer
// material, plaintext reference runs and two-party inference.

#include <cstdio>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "bunet/runtime.hpp"
#include "json.hpp"

using namespace bunet;

namespace {

struct Common {
  std::string spec_path, weights_path, input_path, keys_path, out, report;
  std::string role = "both", transport = "mem", trunc = "exact";
  u64 seed = 1, dealer_seed = 7, input_seed = 0;
  bool have_input_seed = false;
};

TruncMode parse_trunc(const std::string& s) {
  if (s == "exact") return TruncMode::exact;
  if (s == "prob") return TruncMode::prob;
  throw ParamError("unknown truncation mode \"" + s + "\" (exact or prob)");
}

Shape parse_shape(const std::string& s) {
  std::vector<std::size_t> v;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, ',')) v.push_back(std::stoul(part));
  if (v.size() != 4) throw ParamError("shape must be c,d,h,w");
  return Shape{v[0], v[1], v[2], v[3]};
}

Tensor load_input(const Common& c, const NetworkSpec& spec) {
  if (!c.input_path.empty()) return read_tensor(c.input_path);
  if (c.have_input_seed) return gen_synthetic_input(spec, c.input_seed);
  throw ParamError("need --input or --input-seed");
}

void print_labels(const std::vector<u32>& labels, const std::string& out, const Shape& input) {
  if (!out.empty()) {
    Tensor t(std::vector<std::size_t>{1, input.d, input.h, input.w});
    for (std::size_t i = 0; i < labels.size(); ++i) t.data[i] = labels[i];
    write_tensor(out, t);
  }
  std::map<u32, std::size_t> hist;
  for (u32 l : labels) ++hist[l];
  std::cout << "labels:";
  for (auto [k, v] : hist) std::cout << " " << k << "=" << v;
  std::cout << "\n";
}

void write_report(const std::string& path, const TimingLedger& ledger, const NetworkSpec& spec,
                  const std::map<std::string, std::string>& meta) {
  const TimingReport r = timing_report(ledger, spec, meta);
  std::cout << r.text;
  if (path.empty()) return;
  std::ofstream(path) << r.json << "\n";
  std::cout << "report written to " << path << "\n";
}

std::map<std::string, std::string> run_meta(const Common& c, const NetworkSpec& spec) {
  return {{"seed", std::to_string(c.seed)},
          {"dealer_seed", std::to_string(c.dealer_seed)},
          {"trunc", c.trunc},
          {"spec_hash", to_hex(spec.hash())},
          {"params_hash", to_hex(params_hash(RingParams::standard()))}};
}

SessionOptions session_options(const Common& c, Role role) {
  SessionOptions o;
  o.seed = role == Role::alice ? c.seed : c.seed + 1000;
  o.dealer_seed = c.dealer_seed;
  o.trunc = parse_trunc(c.trunc);
  return o;
}

std::optional<KeyMaterial> load_keys(const Common& c) {
  if (c.keys_path.empty()) return std::nullopt;
  return deserialize_keys(read_file(c.keys_path), RingParams::standard());
}

int cmd_run(const Common& c) {
  const RingParams& params = RingParams::standard();
  const NetworkSpec spec = load_spec(c.spec_path);
  const bool alice = c.role == "alice" || c.role == "both";
  const bool bob = c.role == "bob" || c.role == "both";
  if (!alice && !bob) throw ParamError("--role must be alice, bob or both");
  std::optional<NetworkWeights> weights;
  if (bob) {
    if (c.weights_path.empty()) throw ParamError("Bob needs --weights");
    weights = load_weights(c.weights_path, spec);
  }
  std::optional<Tensor> input;
  if (alice) input = load_input(c, spec);

  if (c.role == "both") {
    if (c.transport != "mem") throw ParamError("--role both runs over the in-memory transport");
    DualRunOptions o;
    o.alice = session_options(c, Role::alice);
    o.bob = session_options(c, Role::bob);
    o.keys = load_keys(c);
    const DualRunResult r = run_in_process(spec, *weights, *input, o, params);
    print_labels(r.alice.labels, c.out, spec.input);
    std::cout << "receipt " << r.alice.receipt << "\n";
    write_report(c.report, r.ledger, spec, run_meta(c, spec));
    return 0;
  }

  if (c.transport.rfind("tcp:", 0) != 0) throw ParamError("single-party runs need --transport tcp:HOST:PORT");
  const std::string addr = c.transport.substr(4);
  // Bob (model owner) listens, Alice connects.
  std::unique_ptr<Transport> t;
  if (bob) {
    t = TcpTransport::listen(addr);
  } else {
    t = TcpTransport::connect(addr);
  }
  const Role role = alice ? Role::alice : Role::bob;
  Session s(role, *t, params, session_options(c, role));
  const InferenceResult r = alice ? run_secure_inference(s, spec, &*input, nullptr, load_keys(c))
                                  : run_secure_inference(s, spec, nullptr, &*weights);
  if (alice) print_labels(r.labels, c.out, spec.input);
  std::cout << "receipt " << r.receipt << "\n";
  write_report(c.report, s.ledger(), spec, run_meta(c, spec));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BUNET two-party secure UNET inference"};
  app.require_subcommand(1);
  Common c;

  // spec
  auto* spec_cmd = app.add_subcommand("spec", "write a network spec (and synthetic weights)");
  std::string preset = "scaled3d", variant = "baseline", shape_str, weights_out;
  std::size_t labels = 3, base = 0;
  int quant_bits = 8;
  u64 weights_seed = 1;
  bool no_calibrate = false;
  spec_cmd->add_option("--preset", preset, "full3d, scaled3d or tiny2d")->check(CLI::IsMember({"full3d", "scaled3d", "tiny2d"}));
  spec_cmd->add_option("--shape", shape_str, "input shape c,d,h,w (overrides the preset)");
  spec_cmd->add_option("--labels", labels, "output labels");
  spec_cmd->add_option("--base", base, "channels of the first batch");
  spec_cmd->add_option("--variant", variant, "baseline, relu-avg, hybrid or square");
  spec_cmd->add_option("--quant-bits", quant_bits, "activation bit width")->check(CLI::Range(2, 16));
  spec_cmd->add_option("--weights-seed", weights_seed, "seed of the synthetic weights");
  spec_cmd->add_option("--weights-out", weights_out, "write the synthetic weights here");
  spec_cmd->add_flag("--no-calibrate", no_calibrate, "keep all shifts at zero");
  spec_cmd->add_option("--out", c.out, "spec JSON path")->required();

  // keygen
  auto* keygen_cmd = app.add_subcommand("keygen", "generate Alice's key material for a spec");
  keygen_cmd->add_option("--spec", c.spec_path)->required();
  keygen_cmd->add_option("--seed", c.seed);
  keygen_cmd->add_option("--out", c.out)->required();

  // dealer
  auto* dealer_cmd = app.add_subcommand("dealer", "write a party's dealer tape and print its commitment");
  std::string dealer_role = "alice";
  dealer_cmd->add_option("--dealer-seed", c.dealer_seed);
  dealer_cmd->add_option("--role", dealer_role)->check(CLI::IsMember({"alice", "bob"}));
  dealer_cmd->add_option("--out", c.out)->required();

  // input
  auto* input_cmd = app.add_subcommand("input", "write a synthetic input tensor");
  input_cmd->add_option("--spec", c.spec_path)->required();
  input_cmd->add_option("--seed", c.input_seed);
  input_cmd->add_option("--out", c.out)->required();

  // oracle
  auto* oracle_cmd = app.add_subcommand("oracle", "plaintext reference inference");
  oracle_cmd->add_option("--spec", c.spec_path)->required();
  oracle_cmd->add_option("--weights", c.weights_path)->required();
  oracle_cmd->add_option("--input", c.input_path);
  oracle_cmd->add_option("--input-seed", c.input_seed)->each([&](const std::string&) { c.have_input_seed = true; });
  oracle_cmd->add_option("--trunc", c.trunc, "exact or prob");
  oracle_cmd->add_option("--out", c.out, "label tensor path");

  // run
  auto* run_cmd = app.add_subcommand("run", "two-party secure inference");
  run_cmd->add_option("--spec", c.spec_path)->required();
  run_cmd->add_option("--role", c.role, "alice, bob or both")->check(CLI::IsMember({"alice", "bob", "both"}));
  run_cmd->add_option("--transport", c.transport, "mem or tcp:HOST:PORT");
  run_cmd->add_option("--weights", c.weights_path, "Bob's weights");
  run_cmd->add_option("--input", c.input_path, "Alice's input tensor");
  run_cmd->add_option("--input-seed", c.input_seed)->each([&](const std::string&) { c.have_input_seed = true; });
  run_cmd->add_option("--keys", c.keys_path, "Alice's key file");
  run_cmd->add_option("--trunc", c.trunc, "exact or prob");
  run_cmd->add_option("--seed", c.seed);
  run_cmd->add_option("--dealer-seed", c.dealer_seed);
  run_cmd->add_option("--out", c.out, "label tensor path");
  run_cmd->add_option("--report", c.report, "timing report JSON path");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "time every activation variant on one architecture");
  std::size_t reps = 1;
  bench_cmd->add_option("--shape", shape_str, "input shape c,d,h,w")->default_str("1,8,8,8");
  bench_cmd->add_option("--labels", labels);
  bench_cmd->add_option("--base", base);
  bench_cmd->add_option("--reps", reps);
  bench_cmd->add_option("--trunc", c.trunc, "exact or prob");
  bench_cmd->add_option("--seed", c.seed);
  bench_cmd->add_option("--report", c.report, "JSON path for all variants");

  CLI11_PARSE(app, argc, argv);

  try {
    const RingParams& params = RingParams::standard();
    if (spec_cmd->parsed()) {
      Shape in{1, 64, 64, 64};
      std::size_t b = 64;
      if (preset == "scaled3d") in = Shape{1, 8, 8, 8}, b = 4;
      if (preset == "tiny2d") in = Shape{1, 1, 16, 16}, b = 4;
      if (!shape_str.empty()) in = parse_shape(shape_str);
      if (base) b = base;
      QuantParams q;
      q.act_bits = quant_bits;
      NetworkSpec spec = build_unet_architecture(in, labels, parse_variant(variant), q, b);
      spec.name = preset;
      const NetworkWeights w = gen_synthetic_weights(spec, weights_seed);
      if (!no_calibrate) calibrate(spec, w, gen_synthetic_input(spec, weights_seed + 1), params.p());
      save_spec(c.out, spec);
      if (!weights_out.empty()) save_weights(weights_out, w);
      const Census cs = census(spec);
      std::cout << "spec " << to_hex(spec.hash()) << "\n"
                << "convs " << cs.convs << " (transposed " << cs.transposed << "), activations " << cs.activations
                << ", pools " << cs.pools << ", argmax " << cs.argmax << "\nactivated neurons per batch:";
      for (u64 n : activation_counts(spec)) std::cout << " " << n;
      std::cout << "\n";
      for (TruncMode m : {TruncMode::exact, TruncMode::prob}) {
        const AnalysisReport r = analyze(spec, params.p(), m);
        std::cout << (m == TruncMode::exact ? "exact" : "prob") << " mode: "
                  << (r.ok() ? "fits the plaintext modulus" : r.violations.front()) << "\n";
      }
      return 0;
    }
    if (keygen_cmd->parsed()) {
      const NetworkSpec spec = load_spec(c.spec_path);
      const KeyMaterial k = keygen_for(spec, params, c.seed);
      write_file(c.out, serialize(k, params));
      std::cout << "rotation steps:";
      for (std::size_t s : k.rotations.steps) std::cout << " " << s;
      std::cout << "\n";
      return 0;
    }
    if (dealer_cmd->parsed()) {
      const DealerTape tape(c.dealer_seed, dealer_role == "alice" ? Role::alice : Role::bob);
      write_file(c.out, tape.save());
      std::cout << "commitment " << to_hex(tape.commitment()) << "\n";
      return 0;
    }
    if (input_cmd->parsed()) {
      write_tensor(c.out, gen_synthetic_input(load_spec(c.spec_path), c.input_seed));
      return 0;
    }
    if (oracle_cmd->parsed()) {
      const NetworkSpec spec = load_spec(c.spec_path);
      const NetworkWeights w = load_weights(c.weights_path, spec);
      const OracleResult r = oracle_infer(spec, w, load_input(c, spec), parse_trunc(c.trunc), params.p());
      print_labels(r.labels, c.out, spec.input);
      return 0;
    }
    if (run_cmd->parsed()) return cmd_run(c);
    if (bench_cmd->parsed()) {
      const Shape in = parse_shape(shape_str.empty() ? "1,8,8,8" : shape_str);
      nlohmann::json all = nlohmann::json::array();
      for (Variant v : {Variant::baseline, Variant::relu_avg, Variant::hybrid, Variant::square}) {
        NetworkSpec spec = build_unet_architecture(in, labels, v, {}, base ? base : 4);
        spec.name = std::string("bench-") + variant_name(v);
        const NetworkWeights w = gen_synthetic_weights(spec, c.seed);
        calibrate(spec, w, gen_synthetic_input(spec, c.seed + 1), params.p());
        const Tensor x = gen_synthetic_input(spec, c.seed + 2);
        TimingLedger merged;
        for (std::size_t r = 0; r < reps; ++r) {
          DualRunOptions o;
          o.alice = session_options(c, Role::alice);
          o.bob = session_options(c, Role::bob);
          merged.merge(run_in_process(spec, w, x, o, params).ledger);
        }
        const TimingReport rep = timing_report(merged, spec, {{"reps", std::to_string(reps)}});
        std::cout << rep.text << "\n";
        all.push_back(nlohmann::json::parse(rep.json));
      }
      if (!c.report.empty()) std::ofstream(c.report) << all.dump(2) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
