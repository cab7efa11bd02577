#include "cmg/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cmg {

using nlohmann::json;

namespace {

constexpr char kMotionMagic[4] = {'C', 'M', 'G', '1'};
constexpr char kWeightsMagic[4] = {'C', 'M', 'G', 'W'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + k])) << (8 * k);
  return v;
}

void put_f32(std::string& out, double value) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(value));
  put_u32(out, bits);
}

float get_f32(const std::string& in, std::size_t at) { return std::bit_cast<float>(get_u32(in, at)); }

std::string frame(const char (&magic)[4], const json& header, std::size_t payload_bytes) {
  const std::string h = header.dump();
  std::string out(magic, 4);
  put_u32(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  out.reserve(out.size() + payload_bytes);
  return out;
}

// Splits a framed blob into (header JSON, payload offset).
std::pair<json, std::size_t> unframe(const std::string& bytes, const char (&magic)[4], const char* what) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), magic, 4) != 0) {
    throw MagicMismatchError(std::string(what) + ": bad magic bytes (expected \"" + std::string(magic, 4) + "\")");
  }
  if (bytes.size() < 8) throw FormatError(std::string(what) + ": truncated header length");
  const std::size_t len = get_u32(bytes, 4);
  if (bytes.size() < 8 + len) {
    throw FormatError(std::string(what) + ": truncated header (declares " + std::to_string(len) + " bytes, " +
                      std::to_string(bytes.size() - 8) + " available)");
  }
  json header;
  try {
    header = json::parse(bytes.substr(8, len));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string(what) + ": header is not valid JSON: " + e.what());
  }
  if (!header.is_object()) throw FormatError(std::string(what) + ": header must be a JSON object");
  return {std::move(header), 8 + len};
}

template <typename V>
V field(const json& h, const char* key, const char* what) {
  if (!h.contains(key)) throw SchemaError(std::string("$.") + key, std::string(what) + " header field missing");
  try {
    return h.at(key).get<V>();
  } catch (const json::exception&) {
    throw SchemaError(std::string("$.") + key, std::string(what) + " header field has the wrong type");
  }
}

void check_payload(std::size_t expected, std::size_t actual, const char* what) {
  if (actual < expected) throw TruncatedPayloadError(expected, actual);
  if (actual > expected) {
    throw HeaderMismatchError(std::string(what) + ": payload has " + std::to_string(actual) +
                              " bytes but the header declares " + std::to_string(expected));
  }
}

}  // namespace

double round_sig9(double v) {
  if (!std::isfinite(v) || v == 0.0) return v == 0.0 ? 0.0 : v;
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 9);
  double out = 0.0;
  std::from_chars(buf, res.ptr, out);
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw RuntimeError("write failed: " + path);
}

// ---- motion files ----

int MotionFile::cols() const { return repr == "global" ? 3 * J : relative_dim(J); }

void MotionFile::validate() const {
  require(repr == "relative" || repr == "global", "motion file: repr must be 'relative' or 'global'");
  require(J >= 2, "motion file: J must be >= 2");
  require(fps > 0.0 && std::isfinite(fps), "motion file: fps must be positive");
  require(joint_names.empty() || static_cast<int>(joint_names.size()) == J,
          "motion file: joint_names has " + std::to_string(joint_names.size()) + " entries, J = " + std::to_string(J));
  for (const auto& t : tensors) {
    require(t.rows() == frames() && t.cols() == cols(),
            "motion file: tensor shape " + shape_str(t.rows(), t.cols()) + ", expected " + shape_str(frames(), cols()));
  }
}

std::string encode_motion(const MotionFile& m) {
  m.validate();
  json h;
  h["version"] = MotionFile::kVersion;
  h["n"] = m.n();
  h["f"] = m.frames();
  h["J"] = m.J;
  h["D"] = m.cols();
  h["fps"] = m.fps;
  h["dtype"] = "f32le";
  h["repr"] = m.repr;
  h["joint_names"] = m.joint_names;
  const std::size_t payload = static_cast<std::size_t>(m.n()) * m.frames() * m.cols() * 4;
  std::string out = frame(kMotionMagic, h, payload);
  for (const auto& t : m.tensors) {
    for (Eigen::Index i = 0; i < t.size(); ++i) put_f32(out, t.data()[i]);
  }
  return out;
}

MotionFile decode_motion(const std::string& bytes) {
  auto [h, off] = unframe(bytes, kMotionMagic, "motion file");
  const int version = field<int>(h, "version", "motion file");
  if (version != MotionFile::kVersion) {
    throw UnsupportedVersionError("motion file: unsupported version " + std::to_string(version));
  }
  if (field<std::string>(h, "dtype", "motion file") != "f32le") {
    throw HeaderMismatchError("motion file: unsupported dtype (expected f32le)");
  }
  MotionFile m;
  m.repr = field<std::string>(h, "repr", "motion file");
  if (m.repr != "relative" && m.repr != "global") {
    throw SchemaError("$.repr", "expected \"relative\" or \"global\"");
  }
  m.fps = field<double>(h, "fps", "motion file");
  m.J = field<int>(h, "J", "motion file");
  const int n = field<int>(h, "n", "motion file");
  const int f = field<int>(h, "f", "motion file");
  const int D = field<int>(h, "D", "motion file");
  if (h.contains("joint_names")) m.joint_names = field<std::vector<std::string>>(h, "joint_names", "motion file");
  if (n < 0 || f < 0 || m.J < 2 || !(m.fps > 0.0)) throw HeaderMismatchError("motion file: invalid n, f, J or fps");
  if (D != m.cols()) {
    throw HeaderMismatchError("motion file: header D = " + std::to_string(D) + " inconsistent with J = " +
                              std::to_string(m.J) + " for " + m.repr + " data (expected " +
                              std::to_string(m.cols()) + ")");
  }
  if (!m.joint_names.empty() && static_cast<int>(m.joint_names.size()) != m.J) {
    throw HeaderMismatchError("motion file: joint_names length disagrees with J");
  }
  const std::size_t expected = static_cast<std::size_t>(n) * f * D * 4;
  check_payload(expected, bytes.size() - off, "motion file");
  std::size_t at = off;
  for (int k = 0; k < n; ++k) {
    Matrix t(f, D);
    for (Eigen::Index i = 0; i < t.size(); ++i, at += 4) t.data()[i] = get_f32(bytes, at);
    m.tensors.push_back(std::move(t));
  }
  return m;
}

void write_motion(const MotionFile& m, const std::string& path) { write_file(path, encode_motion(m)); }
MotionFile read_motion(const std::string& path) { return decode_motion(read_file(path)); }

namespace {

std::string fmt9(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 9);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string motion_to_csv(const MotionFile& m) {
  m.validate();
  std::ostringstream out;
  out << "# cmg motion csv v1\n";
  out << "# repr=" << m.repr << " fps=" << fmt9(m.fps) << " n=" << m.n() << " f=" << m.frames() << " J=" << m.J
      << "\n";
  if (!m.joint_names.empty()) {
    out << "# joints=";
    for (int j = 0; j < m.J; ++j) out << (j ? ";" : "") << m.joint_names[j];
    out << "\n";
  }
  out << "agent,frame";
  for (int c = 0; c < m.cols(); ++c) {
    if (m.repr == "global" && !m.joint_names.empty()) {
      out << ',' << m.joint_names[c / 3] << '_' << "xyz"[c % 3];
    } else {
      out << ",c" << c;
    }
  }
  out << "\n";
  for (int k = 0; k < m.n(); ++k) {
    for (int i = 0; i < m.frames(); ++i) {
      out << k << ',' << i;
      for (int c = 0; c < m.cols(); ++c) out << ',' << fmt9(static_cast<float>(m.tensors[k](i, c)));
      out << "\n";
    }
  }
  return out.str();
}

MotionFile motion_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  MotionFile m;
  int n = -1, f = -1;
  bool header_seen = false;
  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    ++row_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream kv(line.substr(1));
      std::string tok;
      while (kv >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const std::string k = tok.substr(0, eq), v = tok.substr(eq + 1);
        try {
          if (k == "repr") m.repr = v;
          if (k == "fps") m.fps = std::stod(v);
          if (k == "n") n = std::stoi(v);
          if (k == "f") f = std::stoi(v);
          if (k == "J") m.J = std::stoi(v);
        } catch (const std::exception&) {
          throw FormatError("csv: bad value for '" + k + "' on line " + std::to_string(row_no));
        }
        if (k == "joints") {
          std::istringstream names(v);
          std::string name;
          while (std::getline(names, name, ';')) m.joint_names.push_back(name);
        }
      }
      continue;
    }
    if (!header_seen) {
      header_seen = true;
      if (n < 0 || f < 0 || m.J < 2) throw FormatError("csv: missing '# repr=... n=... f=... J=...' header");
      m.validate();
      for (int k = 0; k < n; ++k) m.tensors.push_back(Matrix::Zero(f, m.cols()));
      continue;
    }
    std::vector<double> vals;
    std::size_t start = 0;
    while (start <= line.size()) {
      const auto end = line.find(',', start);
      const std::string cell = line.substr(start, end == std::string::npos ? std::string::npos : end - start);
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
        throw FormatError("csv: non-numeric cell '" + cell + "' on line " + std::to_string(row_no));
      }
      vals.push_back(v);
      if (end == std::string::npos) break;
      start = end + 1;
    }
    if (static_cast<int>(vals.size()) != 2 + m.cols()) {
      throw FormatError("csv: line " + std::to_string(row_no) + " has " + std::to_string(vals.size()) +
                        " cells, expected " + std::to_string(2 + m.cols()));
    }
    const int k = static_cast<int>(vals[0]), i = static_cast<int>(vals[1]);
    if (k < 0 || k >= n || i < 0 || i >= f) throw FormatError("csv: agent/frame index out of range on line " + std::to_string(row_no));
    for (int c = 0; c < m.cols(); ++c) m.tensors[k](i, c) = vals[2 + c];
  }
  if (!header_seen) throw FormatError("csv: no column header row");
  return m;
}

// ---- weight checkpoints ----

std::string encode_weights(const DenoiserWeights& w) {
  const DenoiserConfig& c = w.config();
  json h;
  h["format_version"] = 1;
  h["dtype"] = "f32le";
  h["seed"] = w.seed();
  h["config"] = {{"frames", c.frames}, {"joints", c.joints}, {"latent", c.latent}, {"blocks", c.blocks},
                 {"ffn", c.ffn},       {"text_dim", c.text_dim}, {"T", c.T},     {"fps", c.fps}};
  json tensors = json::array();
  std::size_t payload = 0;
  for (const auto& t : w.tensors()) {
    tensors.push_back({{"name", t.name}, {"shape", {t.value.rows(), t.value.cols()}}});
    payload += static_cast<std::size_t>(t.value.size()) * 4;
  }
  h["tensors"] = std::move(tensors);
  std::string out = frame(kWeightsMagic, h, payload);
  for (const auto& t : w.tensors()) {
    for (Eigen::Index i = 0; i < t.value.size(); ++i) put_f32(out, t.value.data()[i]);
  }
  return out;
}

DenoiserWeights decode_weights(const std::string& bytes) {
  auto [h, off] = unframe(bytes, kWeightsMagic, "checkpoint");
  const int version = field<int>(h, "format_version", "checkpoint");
  if (version != 1) throw UnsupportedVersionError("checkpoint: unsupported format version " + std::to_string(version));
  if (field<std::string>(h, "dtype", "checkpoint") != "f32le") throw HeaderMismatchError("checkpoint: unsupported dtype");
  const json cj = field<json>(h, "config", "checkpoint");
  DenoiserConfig c;
  try {
    c.frames = cj.at("frames").get<int>();
    c.joints = cj.at("joints").get<int>();
    c.latent = cj.at("latent").get<int>();
    c.blocks = cj.at("blocks").get<int>();
    c.ffn = cj.at("ffn").get<int>();
    c.text_dim = cj.at("text_dim").get<int>();
    c.T = cj.at("T").get<int>();
    c.fps = cj.at("fps").get<double>();
  } catch (const json::exception& e) {
    throw SchemaError("$.config", std::string("incomplete model config: ") + e.what());
  }
  const auto lay = DenoiserWeights::layout(c);
  const json tj = field<json>(h, "tensors", "checkpoint");
  if (!tj.is_array() || tj.size() != lay.size()) {
    throw HeaderMismatchError("checkpoint: tensor list does not match the model layout");
  }
  std::size_t expected = 0;
  for (std::size_t i = 0; i < lay.size(); ++i) {
    const auto& [name, shape] = lay[i];
    if (tj[i].value("name", std::string()) != name || tj[i].value("shape", std::vector<int>{}) != std::vector<int>{shape.first, shape.second}) {
      throw HeaderMismatchError("checkpoint: tensor " + std::to_string(i) + " does not match layout entry '" + name + "'");
    }
    expected += static_cast<std::size_t>(shape.first) * shape.second * 4;
  }
  check_payload(expected, bytes.size() - off, "checkpoint");
  std::vector<NamedTensor> tensors;
  std::size_t at = off;
  for (const auto& [name, shape] : lay) {
    Matrix m(shape.first, shape.second);
    for (Eigen::Index i = 0; i < m.size(); ++i, at += 4) m.data()[i] = get_f32(bytes, at);
    tensors.push_back({name, std::move(m)});
  }
  return DenoiserWeights(c, std::move(tensors), field<std::uint64_t>(h, "seed", "checkpoint"));
}

void save_weights(const DenoiserWeights& w, const std::string& path) { write_file(path, encode_weights(w)); }
DenoiserWeights load_weights(const std::string& path) { return decode_weights(read_file(path)); }

}  // namespace cmg
