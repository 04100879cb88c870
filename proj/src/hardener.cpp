#include <algorithm>
#include <array>
#include <cstring>
#include <set>

#include "json.hpp"
#include "sft/hardener.hpp"

namespace sft {

const char* harden_mode_text(HardenMode m) {
  switch (m) {
    case HardenMode::None: return "none";
    case HardenMode::Critical: return "critical";
    case HardenMode::Full: return "full";
  }
  return "?";
}

HardenMode parse_harden_mode(const std::string& s) {
  if (s == "none") return HardenMode::None;
  if (s == "critical") return HardenMode::Critical;
  if (s == "full") return HardenMode::Full;
  throw Error("unknown hardening mode '" + s + "'");
}

uint32_t crc32_ieee(std::span<const uint8_t> bytes) {
  static const std::array<uint32_t, 256> table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  uint32_t crc = 0xFFFFFFFFu;
  for (uint8_t b : bytes) crc = table[(crc ^ b) & 0xFF] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

bool block_protectable(const Program& p, const BasicBlock& b) {
  if (b.end - b.begin != 1) return true;
  Opcode op = p.instructions[b.begin].opcode;
  return op != Opcode::Jmp && op != Opcode::Halt;
}

HardenedProgram harden(const Program& p, const Cfg& cfg, HardenMode mode,
                       const std::vector<uint32_t>& critical_blocks,
                       const std::vector<uint8_t>& critical_vars) {
  HardenedProgram h;
  h.working = encode(p);
  h.backup = h.working;
  h.backup_crc = crc32_ieee(h.backup.bytes);
  h.manifest.mode = mode;

  std::set<uint32_t> block_ids;
  if (mode == HardenMode::Full) {
    for (const BasicBlock& b : cfg.blocks) {
      if (block_protectable(p, b)) block_ids.insert(b.id);
    }
  } else if (mode == HardenMode::Critical) {
    for (uint32_t id : critical_blocks) {
      if (id >= cfg.blocks.size()) {
        throw Error("unknown block id " + std::to_string(id));
      }
      if (block_protectable(p, cfg.blocks[id])) block_ids.insert(id);
    }
  }
  for (uint32_t id : block_ids) {
    h.manifest.protected_blocks.push_back({id, cfg.blocks[id].begin, cfg.blocks[id].end});
  }

  if (mode == HardenMode::Full) {
    for (size_t v = 0; v < p.variables.size(); ++v) {
      h.manifest.protected_variables.push_back(static_cast<uint8_t>(v));
    }
  } else if (mode == HardenMode::Critical) {
    std::set<uint8_t> vars(critical_vars.begin(), critical_vars.end());
    for (uint8_t v : vars) {
      if (v >= p.variables.size()) {
        throw Error("unknown variable index " + std::to_string(v));
      }
      h.manifest.protected_variables.push_back(v);
    }
  }
  return h;
}

void verify_backup(const HardenedProgram& h) {
  if (crc32_ieee(h.backup.bytes) != h.backup_crc) {
    throw Error("backup image fails its checksum");
  }
  if (h.backup.bytes.size() != h.working.bytes.size()) {
    throw Error("backup and working images differ in size");
  }
  if (h.backup.var_count() != h.working.var_count() ||
      h.backup.instr_count() != h.working.instr_count()) {
    throw Error("backup and working images differ in shape");
  }
  for (const ProtectedRange& r : h.manifest.protected_blocks) {
    size_t off = h.backup.code_offset() + kInstrRecordSize * r.begin;
    size_t len = kInstrRecordSize * (r.end - r.begin);
    if (std::memcmp(h.backup.bytes.data() + off, h.working.bytes.data() + off, len) != 0) {
      throw Error("working copy of protected block " + std::to_string(r.block) +
                  " diverges from the backup");
    }
  }
}

std::string manifest_json(const Manifest& m) {
  nlohmann::json j;
  j["mode"] = harden_mode_text(m.mode);
  j["blocks"] = nlohmann::json::array();
  for (const ProtectedRange& r : m.protected_blocks) {
    j["blocks"].push_back({{"block", r.block}, {"begin", r.begin}, {"end", r.end}});
  }
  j["variables"] = m.protected_variables;
  return j.dump();
}

Manifest manifest_from_json(const std::string& text) {
  Manifest m;
  try {
    nlohmann::json j = nlohmann::json::parse(text);
    m.mode = parse_harden_mode(j.at("mode").get<std::string>());
    for (const auto& b : j.at("blocks")) {
      ProtectedRange r;
      r.block = b.at("block").get<uint32_t>();
      r.begin = b.at("begin").get<uint32_t>();
      r.end = b.at("end").get<uint32_t>();
      if (r.begin >= r.end) throw Error("empty protected range");
      m.protected_blocks.push_back(r);
    }
    for (const auto& v : j.at("variables")) {
      m.protected_variables.push_back(v.get<uint8_t>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad manifest: ") + e.what());
  }
  std::sort(m.protected_blocks.begin(), m.protected_blocks.end(),
            [](const ProtectedRange& a, const ProtectedRange& b) { return a.begin < b.begin; });
  std::sort(m.protected_variables.begin(), m.protected_variables.end());
  return m;
}

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 24) & 0xff));
}

uint32_t get_u32(std::span<const uint8_t> b, size_t off) {
  return static_cast<uint32_t>(b[off]) | (static_cast<uint32_t>(b[off + 1]) << 8) |
         (static_cast<uint32_t>(b[off + 2]) << 16) | (static_cast<uint32_t>(b[off + 3]) << 24);
}

}  // namespace

std::vector<uint8_t> save_container(const HardenedProgram& h) {
  if (h.backup.bytes.size() != h.working.bytes.size()) {
    throw Error("backup and working images differ in size");
  }
  std::vector<uint8_t> out;
  std::string manifest = manifest_json(h.manifest);
  out.reserve(2 * h.backup.bytes.size() + 8 + manifest.size());
  out.insert(out.end(), h.backup.bytes.begin(), h.backup.bytes.end());
  out.insert(out.end(), h.working.bytes.begin(), h.working.bytes.end());
  put_u32(out, h.backup_crc);
  put_u32(out, static_cast<uint32_t>(manifest.size()));
  out.insert(out.end(), manifest.begin(), manifest.end());
  return out;
}

HardenedProgram load_container(std::span<const uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) throw Error("container too short");
  uint32_t var_count = bytes[4] | (bytes[5] << 8);
  uint32_t instr_count = bytes[6] | (bytes[7] << 8);
  size_t image_len = kHeaderSize + 4u * var_count + kInstrRecordSize * instr_count;
  if (bytes.size() < 2 * image_len + 8) throw Error("container too short");

  HardenedProgram h;
  h.backup.bytes.assign(bytes.begin(), bytes.begin() + image_len);
  h.working.bytes.assign(bytes.begin() + image_len, bytes.begin() + 2 * image_len);
  h.backup_crc = get_u32(bytes, 2 * image_len);
  uint32_t manifest_len = get_u32(bytes, 2 * image_len + 4);
  if (bytes.size() != 2 * image_len + 8 + manifest_len) {
    throw Error("container size mismatch");
  }
  std::string manifest(bytes.begin() + 2 * image_len + 8, bytes.end());
  if (crc32_ieee(h.backup.bytes) != h.backup_crc) {
    throw Error("backup image fails its checksum");
  }
  h.manifest = manifest_from_json(manifest);
  return h;
}

}  // namespace sft
