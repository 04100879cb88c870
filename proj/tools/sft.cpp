#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sft/campaign.hpp"
#include "sft/criticality.hpp"
#include "sft/dependence.hpp"
#include "sft/fault.hpp"
#include "sft/hardener.hpp"
#include "sft/ir.hpp"
#include "sft/vm.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// command-line mistakes (exit 2), as opposed to domain failures (exit 1)
struct UsageFailure {
  std::string message;
};

std::vector<uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw sft::Error("cannot open '" + path + "'");
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  if (in.bad()) throw sft::Error("cannot read '" + path + "'");
  return bytes;
}

void write_bytes(const std::string& path, const void* data, size_t size) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw sft::Error("cannot open '" + path + "' for writing");
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw sft::Error("cannot write '" + path + "'");
}

bool has_image_magic(const std::vector<uint8_t>& bytes) {
  return bytes.size() >= 4 && bytes[0] == sft::kMagic[0] && bytes[1] == sft::kMagic[1] &&
         bytes[2] == sft::kMagic[2] && bytes[3] == sft::kMagic[3];
}

// .ir text or an encoded image, told apart by the magic
sft::Program load_program(const std::string& path) {
  std::vector<uint8_t> bytes = read_bytes(path);
  if (has_image_magic(bytes)) return sft::decode(bytes);
  return sft::parse_text(std::string(bytes.begin(), bytes.end()));
}

sft::CriticalityWeights parse_weights(const std::string& text, double theta) {
  sft::CriticalityWeights w;
  w.threshold = theta;
  if (text.empty()) return w;
  std::istringstream in(text);
  std::string part;
  double values[3];
  for (int i = 0; i < 3; ++i) {
    if (!std::getline(in, part, ',')) throw UsageFailure{"--weights expects wc,wf,wl"};
    try {
      size_t used = 0;
      values[i] = std::stod(part, &used);
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw UsageFailure{"bad number '" + part + "' in --weights"};
    }
  }
  if (std::getline(in, part, ',')) throw UsageFailure{"--weights expects exactly three numbers"};
  w.condition = values[0];
  w.fanout = values[1];
  w.loop = values[2];
  return w;
}

sft::TriggerRange parse_triggers(const std::string& text) {
  try {
    size_t dots = text.find("..");
    sft::TriggerRange r;
    if (dots == std::string::npos) {
      r.first = r.last = std::stoull(text);
    } else {
      r.first = std::stoull(text.substr(0, dots));
      r.last = std::stoull(text.substr(dots + 2));
    }
    if (r.first > r.last) throw UsageFailure{"--triggers range is empty"};
    return r;
  } catch (const UsageFailure&) {
    throw;
  } catch (const std::exception&) {
    throw UsageFailure{"bad --triggers '" + text + "', expected first..last"};
  }
}

sft::FaultSpec parse_fault_arg(const std::string& text) {
  try {
    return sft::parse_fault(text);
  } catch (const sft::Error& e) {
    throw UsageFailure{e.what()};
  }
}

void check_fault_bounds(const sft::FaultSpec& f, const sft::BinaryImage& image) {
  size_t limit = f.segment == sft::FaultSegment::Code ? image.code_size() : image.data_size();
  if (f.byte_index >= limit) {
    throw UsageFailure{"fault byte " + std::to_string(f.byte_index) + " outside the " +
                       std::string(sft::fault_segment_text(f.segment)) + " segment (" +
                       std::to_string(limit) + " bytes)"};
  }
}

const char* opcode_name(sft::Opcode op) {
  static const char* names[] = {"halt", "const", "mov", "add", "sub",
                                "mul",  "div",   "out", "jmp", "br"};
  return names[static_cast<uint8_t>(op)];
}

json run_result_json(const sft::RunResult& r) {
  json j;
  j["status"] = sft::run_status_text(r.status);
  if (r.status == sft::RunStatus::Trapped) {
    j["trap"] = {{"kind", sft::trap_kind_text(r.trap.kind)}, {"pc", r.trap.pc}};
  } else {
    j["trap"] = nullptr;
  }
  j["output"] = r.output;
  j["dyn_instr"] = r.dyn_instr;
  j["detections"] = json::array();
  for (const sft::Detection& d : r.detections) {
    j["detections"].push_back({{"block", d.block}, {"dyn_instr", d.dyn_index}});
  }
  j["recoveries"] = r.recoveries;
  j["shadow_bytes"] = r.shadow_bytes;
  j["fault_applied"] = r.fault_applied ? json(sft::fault_text(*r.fault_applied)) : json(nullptr);
  j["final_store"] = r.final_store;
  return j;
}

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty()) {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
  } else {
    write_bytes(out_path, text.data(), text.size());
  }
}

struct CriticalSelection {
  std::vector<uint8_t> vars;
  std::vector<sft::CriticalBlockEntry> blocks;
};

CriticalSelection select_critical(const sft::Cfg& cfg, const sft::CriticalityReport& report,
                                  std::optional<uint32_t> top_k, bool protect_defs) {
  CriticalSelection sel;
  sel.vars = sft::select_critical_variables(report, top_k);
  sel.blocks = sft::select_critical_blocks(cfg, report, sel.vars, protect_defs);
  return sel;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"selective soft-error hardening toolkit"};
  app.require_subcommand(1);

  // parse
  auto* cmd_parse = app.add_subcommand("parse", "assemble a text program into a binary image");
  std::string parse_in, parse_out;
  cmd_parse->add_option("input", parse_in, "program text file")->required();
  cmd_parse->add_option("-o,--output", parse_out, "image file (default: stdout)");

  // disasm
  auto* cmd_disasm = app.add_subcommand("disasm", "print a binary image as program text");
  std::string disasm_in, disasm_out;
  cmd_disasm->add_option("input", disasm_in, "image or container file")->required();
  cmd_disasm->add_option("-o,--output", disasm_out, "text file (default: stdout)");

  // analyze
  auto* cmd_analyze = app.add_subcommand("analyze", "dependence and criticality report");
  std::string an_in, an_out, an_weights, an_dot, an_slice, an_fanout;
  double an_theta = sft::CriticalityWeights{}.threshold;
  uint32_t an_topk = 0;
  bool an_protect_defs = false;
  cmd_analyze->add_option("input", an_in, "program text or image file")->required();
  cmd_analyze->add_option("-o,--output", an_out, "report file (default: stdout)");
  cmd_analyze->add_option("--weights", an_weights, "criticality weights wc,wf,wl");
  cmd_analyze->add_option("--theta", an_theta, "criticality threshold");
  cmd_analyze->add_option("--top-k", an_topk, "cap the critical set to the k best scores");
  cmd_analyze->add_flag("--protect-defs", an_protect_defs,
                        "also mark blocks that define critical variables");
  cmd_analyze->add_option("--dot", an_dot, "write the dependence graph in dot form");
  cmd_analyze->add_option("--slice", an_slice, "include the backward slice of this variable");
  cmd_analyze->add_option("--fanout", an_fanout, "include the forward fan-out of this variable");

  // harden
  auto* cmd_harden = app.add_subcommand("harden", "build a hardened container");
  std::string hd_in, hd_out, hd_mode = "critical", hd_weights;
  double hd_theta = sft::CriticalityWeights{}.threshold;
  uint32_t hd_topk = 0;
  bool hd_protect_defs = false;
  cmd_harden->add_option("input", hd_in, "program text or image file")->required();
  cmd_harden->add_option("-o,--output", hd_out, "container file")->required();
  cmd_harden->add_option("--mode", hd_mode, "protection mode")
      ->check(CLI::IsMember({"none", "critical", "full"}));
  cmd_harden->add_option("--weights", hd_weights, "criticality weights wc,wf,wl");
  cmd_harden->add_option("--theta", hd_theta, "criticality threshold");
  cmd_harden->add_option("--top-k", hd_topk, "cap the critical set to the k best scores");
  cmd_harden->add_flag("--protect-defs", hd_protect_defs,
                       "also protect blocks that define critical variables");

  // run
  auto* cmd_run = app.add_subcommand("run", "execute a hardened container");
  std::string run_in, run_fault, run_trace;
  uint64_t run_limit = sft::kDefaultStepLimit;
  cmd_run->add_option("input", run_in, "container file")->required();
  cmd_run->add_option("--fault", run_fault, "fault spec segment:byte:bit@trigger");
  cmd_run->add_option("--step-limit", run_limit, "dynamic instruction budget");
  cmd_run->add_option("--trace", run_trace, "write a jsonl execution trace");

  // inject
  auto* cmd_inject = app.add_subcommand("inject", "flip one bit in a container's working image");
  std::string in_in, in_out, in_fault, in_segment;
  int64_t in_byte = -1;
  int64_t in_bit = -1, in_paper_bit = -1;
  uint64_t in_trigger = 0;
  bool in_enumerate = false;
  std::string in_triggers = "0..0";
  cmd_inject->add_option("input", in_in, "container file")->required();
  cmd_inject->add_option("-o,--output", in_out, "write the injected container here");
  cmd_inject->add_option("--fault", in_fault, "fault spec segment:byte:bit@trigger");
  cmd_inject->add_option("--segment", in_segment, "code or data")
      ->check(CLI::IsMember({"code", "data"}));
  cmd_inject->add_option("--byte", in_byte, "byte offset within the segment");
  cmd_inject->add_option("--bit", in_bit, "bit index, 0 = least significant");
  cmd_inject->add_option("--paper-bit", in_paper_bit, "bit position 1..8 counted from the msb");
  cmd_inject->add_option("--trigger", in_trigger, "trigger to record in the spec echo");
  cmd_inject->add_flag("--enumerate", in_enumerate, "list the whole fault space instead");
  cmd_inject->add_option("--triggers", in_triggers, "trigger range first..last for --enumerate");

  // campaign
  auto* cmd_campaign = app.add_subcommand("campaign", "run a fault-injection campaign");
  std::string cp_in, cp_out, cp_modes = "none,critical,full", cp_triggers = "0..0", cp_weights;
  double cp_theta = sft::CriticalityWeights{}.threshold;
  bool cp_exhaustive = false;
  uint32_t cp_sample = 0, cp_jobs = 1;
  uint64_t cp_seed = 1, cp_limit = sft::kDefaultStepLimit;
  cmd_campaign->add_option("input", cp_in, "container file")->required();
  cmd_campaign->add_option("-o,--output", cp_out, "output directory")->required();
  cmd_campaign->add_option("--modes", cp_modes, "comma list of none,critical,full");
  cmd_campaign->add_flag("--exhaustive", cp_exhaustive, "enumerate the whole fault space");
  cmd_campaign->add_option("--sample", cp_sample, "sample this many faults instead");
  cmd_campaign->add_option("--seed", cp_seed, "sampling seed");
  cmd_campaign->add_option("--triggers", cp_triggers, "trigger range first..last");
  cmd_campaign->add_option("--jobs", cp_jobs, "worker threads");
  cmd_campaign->add_option("--step-limit", cp_limit, "dynamic instruction budget per trial");
  cmd_campaign->add_option("--weights", cp_weights, "criticality weights wc,wf,wl");
  cmd_campaign->add_option("--theta", cp_theta, "criticality threshold");

  // report
  auto* cmd_report = app.add_subcommand("report", "summarize a campaign output directory");
  std::string rp_dir;
  cmd_report->add_option("dir", rp_dir, "campaign output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*cmd_parse) {
      sft::Program p = sft::parse_text([&] {
        std::vector<uint8_t> bytes = read_bytes(parse_in);
        return std::string(bytes.begin(), bytes.end());
      }());
      sft::BinaryImage img = sft::encode(p);
      if (parse_out.empty()) {
        std::cout.write(reinterpret_cast<const char*>(img.bytes.data()),
                        static_cast<std::streamsize>(img.bytes.size()));
      } else {
        write_bytes(parse_out, img.bytes.data(), img.bytes.size());
      }
    } else if (*cmd_disasm) {
      std::vector<uint8_t> bytes = read_bytes(disasm_in);
      sft::Program p;
      try {
        p = sft::decode(bytes);
      } catch (const sft::DecodeError& e) {
        if (e.code != sft::DecodeCode::TrailingBytes) throw;
        // containers carry two images; show the working copy
        p = sft::decode(sft::load_container(bytes).working);
      }
      emit(disasm_out, sft::disassemble(p));
    } else if (*cmd_analyze) {
      sft::Program p = load_program(an_in);
      sft::Cfg cfg = sft::build_cfg(p);
      sft::CriticalityWeights w = parse_weights(an_weights, an_theta);
      sft::CriticalityReport report = sft::score_variables(p, cfg, w);
      std::optional<uint32_t> top_k;
      if (cmd_analyze->count("--top-k")) top_k = an_topk;
      CriticalSelection sel = select_critical(cfg, report, top_k, an_protect_defs);
      json j = json::parse(sft::report_json(report, p, sel.vars, sel.blocks));
      sft::DependenceGraph g = sft::analyze(p, cfg);
      if (!an_dot.empty()) {
        std::string dot = sft::to_dot(g, p);
        write_bytes(an_dot, dot.data(), dot.size());
      }
      if (!an_slice.empty()) {
        json names = json::array();
        for (uint8_t v : sft::backward_slice(g, p, an_slice)) {
          names.push_back(p.variables[v].name);
        }
        j["slice"] = {{"variable", an_slice}, {"variables", names}};
      }
      if (!an_fanout.empty()) {
        json names = json::array();
        for (uint8_t v : sft::forward_fanout(g, p, an_fanout)) {
          names.push_back(p.variables[v].name);
        }
        j["fanout"] = {{"variable", an_fanout}, {"variables", names}};
      }
      emit(an_out, j.dump(2));
    } else if (*cmd_harden) {
      sft::Program p = load_program(hd_in);
      sft::Cfg cfg = sft::build_cfg(p);
      sft::HardenMode mode = sft::parse_harden_mode(hd_mode);
      sft::HardenedProgram h;
      if (mode == sft::HardenMode::Critical) {
        sft::CriticalityWeights w = parse_weights(hd_weights, hd_theta);
        sft::CriticalityReport report = sft::score_variables(p, cfg, w);
        std::optional<uint32_t> top_k;
        if (cmd_harden->count("--top-k")) top_k = hd_topk;
        CriticalSelection sel = select_critical(cfg, report, top_k, hd_protect_defs);
        std::vector<uint32_t> blocks;
        for (const sft::CriticalBlockEntry& e : sel.blocks) blocks.push_back(e.block);
        h = sft::harden(p, cfg, mode, blocks, sel.vars);
      } else {
        h = sft::harden(p, cfg, mode);
      }
      std::vector<uint8_t> container = sft::save_container(h);
      write_bytes(hd_out, container.data(), container.size());
      std::cout << sft::manifest_json(h.manifest) << "\n";
    } else if (*cmd_run) {
      sft::HardenedProgram h = sft::load_container(read_bytes(run_in));
      std::optional<sft::FaultSpec> fault;
      if (cmd_run->count("--fault")) {
        fault = parse_fault_arg(run_fault);
        check_fault_bounds(*fault, h.working);
      }
      std::ofstream trace_out;
      sft::TraceFn trace;
      if (!run_trace.empty()) {
        trace_out.open(run_trace);
        if (!trace_out) throw sft::Error("cannot open '" + run_trace + "' for writing");
        trace = [&trace_out](uint64_t dyn, uint32_t pc, sft::Opcode op,
                             const std::optional<std::pair<uint8_t, int32_t>>& write) {
          json line = {{"dyn_instr", dyn}, {"pc", pc}, {"opcode", opcode_name(op)}};
          line["writes"] = json::array();
          if (write) line["writes"].push_back({write->first, write->second});
          trace_out << line.dump() << '\n';
        };
      }
      sft::RunResult r = sft::run(h, run_limit, fault, trace);
      std::cout << run_result_json(r).dump(2) << "\n";
      return r.status == sft::RunStatus::Halted ? 0 : 1;
    } else if (*cmd_inject) {
      sft::HardenedProgram h = sft::load_container(read_bytes(in_in));
      if (in_enumerate) {
        sft::TriggerRange range = parse_triggers(in_triggers);
        for (const sft::FaultSpec& f : sft::enumerate_faults(h.working, range)) {
          std::cout << sft::fault_text(f) << "\n";
        }
        return 0;
      }
      sft::FaultSpec f;
      if (cmd_inject->count("--fault")) {
        f = parse_fault_arg(in_fault);
      } else {
        if (in_segment.empty() || in_byte < 0) {
          throw UsageFailure{"need --fault, or --segment and --byte"};
        }
        f.segment = in_segment == "code" ? sft::FaultSegment::Code : sft::FaultSegment::Data;
        f.byte_index = static_cast<uint32_t>(in_byte);
        if ((in_bit < 0) == (in_paper_bit < 0)) {
          throw UsageFailure{"give exactly one of --bit or --paper-bit"};
        }
        if (in_bit >= 0) {
          if (in_bit > 7) throw UsageFailure{"bit index must be 0..7"};
          f.bit_index = static_cast<uint8_t>(in_bit);
        } else {
          if (in_paper_bit < 1 || in_paper_bit > 8) {
            throw UsageFailure{"--paper-bit must be 1..8"};
          }
          f.bit_index = sft::msb_position_to_index(static_cast<uint8_t>(in_paper_bit));
        }
        f.trigger = in_trigger;
      }
      check_fault_bounds(f, h.working);
      size_t offset = (f.segment == sft::FaultSegment::Code ? h.working.code_offset()
                                                            : h.working.data_offset()) +
                      f.byte_index;
      uint8_t before = h.working.bytes[offset];
      uint8_t after = sft::flip_bit(before, f.bit_index);
      h.working.bytes[offset] = after;
      char line[160];
      std::snprintf(line, sizeof line,
                    "%s byte %u bit %u (position %u from msb): 0x%02X -> 0x%02X\n",
                    sft::fault_segment_text(f.segment), f.byte_index, f.bit_index,
                    8 - f.bit_index, before, after);
      std::cout << line << "spec: " << sft::fault_text(f) << "\n";
      if (!in_out.empty()) {
        std::vector<uint8_t> container = sft::save_container(h);
        write_bytes(in_out, container.data(), container.size());
      } else {
        std::cerr << "note: no -o given, container not written\n";
      }
    } else if (*cmd_campaign) {
      sft::HardenedProgram h = sft::load_container(read_bytes(cp_in));
      sft::Program p = sft::decode(h.backup);
      sft::CampaignConfig config;
      config.modes.clear();
      std::istringstream modes_in(cp_modes);
      std::string mode_text;
      while (std::getline(modes_in, mode_text, ',')) {
        try {
          config.modes.push_back(sft::parse_harden_mode(mode_text));
        } catch (const sft::Error& e) {
          throw UsageFailure{e.what()};
        }
      }
      if (config.modes.empty()) throw UsageFailure{"--modes lists no modes"};
      if (cp_exhaustive == (cp_sample > 0)) {
        throw UsageFailure{"choose exactly one of --exhaustive or --sample N"};
      }
      sft::TriggerRange range = parse_triggers(cp_triggers);
      std::vector<sft::FaultSpec> faults =
          cp_exhaustive ? sft::enumerate_faults(h.working, range)
                        : sft::sample_faults(h.working, range, cp_sample, cp_seed);
      config.step_limit = cp_limit;
      config.jobs = cp_jobs;
      config.weights = parse_weights(cp_weights, cp_theta);
      sft::CampaignResult result = sft::run_campaign(p, faults, config, &h.manifest);

      fs::create_directories(cp_out);
      std::string csv = sft::campaign_csv(result);
      write_bytes((fs::path(cp_out) / "campaign.csv").string(), csv.data(), csv.size());
      std::string summary = sft::campaign_summary_json(result, config);
      write_bytes((fs::path(cp_out) / "summary.json").string(), summary.data(), summary.size());
      std::string overhead = sft::overhead_csv(sft::overhead_report(p, config));
      write_bytes((fs::path(cp_out) / "overhead.csv").string(), overhead.data(), overhead.size());
    } else if (*cmd_report) {
      std::vector<uint8_t> raw = read_bytes((fs::path(rp_dir) / "summary.json").string());
      json summary = json::parse(raw.begin(), raw.end());
      std::cout << "trials: " << summary["trials"] << "  golden dyn_instr: "
                << summary["golden"]["dyn_instr"] << "\n\n";
      std::printf("%-10s %8s %8s %8s %8s %8s %8s %8s %10s\n", "mode", "trials", "benign", "sdc",
                  "det-rec", "det-nrec", "crash", "hang", "coverage");
      for (const auto& [mode, stats] : summary["modes"].items()) {
        const json& c = stats["counts"];
        std::printf("%-10s %8llu %8llu %8llu %8llu %8llu %8llu %8llu %10.4f\n", mode.c_str(),
                    static_cast<unsigned long long>(stats["trials"].get<uint64_t>()),
                    static_cast<unsigned long long>(c["benign"].get<uint64_t>()),
                    static_cast<unsigned long long>(c["sdc"].get<uint64_t>()),
                    static_cast<unsigned long long>(c["detected-recovered"].get<uint64_t>()),
                    static_cast<unsigned long long>(c["detected-not-recovered"].get<uint64_t>()),
                    static_cast<unsigned long long>(c["crash"].get<uint64_t>()),
                    static_cast<unsigned long long>(c["hang"].get<uint64_t>()),
                    stats["coverage_non_benign"].get<double>());
      }
      fs::path overhead_path = fs::path(rp_dir) / "overhead.csv";
      if (fs::exists(overhead_path)) {
        std::vector<uint8_t> csv = read_bytes(overhead_path.string());
        std::cout << "\noverhead:\n" << std::string(csv.begin(), csv.end());
      }
    }
    return 0;
  } catch (const UsageFailure& u) {
    std::cerr << "error: " << u.message << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const sft::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
