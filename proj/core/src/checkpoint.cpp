#include "rap/checkpoint.hpp"

#include <charconv>
#include <map>
#include <sstream>

#include "binary_io.hpp"
#include "rap/error.hpp"

namespace rap {
namespace {

constexpr const char* kMagic = "RAPCKPT";
constexpr int kVersion = 1;

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const std::string& file) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError(FormatError::Kind::kMalformedHeader, file + ": bad number '" + s + "'");
  }
  return v;
}

std::size_t parse_size(const std::string& s, const std::string& file) {
  std::size_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError(FormatError::Kind::kMalformedHeader, file + ": bad integer '" + s + "'");
  }
  return v;
}

std::string encoder_line(const EncoderConfig& c) {
  std::ostringstream os;
  os << "encoder hidden=" << c.hidden << " proj_dim=" << c.proj_dim << " layers=" << c.layers
     << " heads=" << c.heads << " mlp_dim=" << c.mlp_dim << " vocab_size=" << c.vocab_size
     << " frames=" << c.frames << " patches=" << c.patches << " patch_dim=" << c.patch_dim
     << " max_tokens=" << c.max_tokens << " positional=" << (c.positional ? 1 : 0)
     << " seed=" << c.seed;
  return os.str();
}

EncoderConfig parse_encoder(const std::vector<std::string>& f, const std::string& file) {
  std::map<std::string, std::string> kv;
  for (std::size_t i = 1; i < f.size(); ++i) {
    const auto eq = f[i].find('=');
    if (eq == std::string::npos) {
      throw FormatError(FormatError::Kind::kMalformedHeader, file + ": bad encoder field " + f[i]);
    }
    kv[f[i].substr(0, eq)] = f[i].substr(eq + 1);
  }
  const auto get = [&](const char* key) {
    const auto it = kv.find(key);
    if (it == kv.end()) {
      throw FormatError(FormatError::Kind::kMalformedHeader,
                        file + ": encoder line lacks " + std::string(key));
    }
    return parse_size(it->second, file);
  };
  EncoderConfig c;
  c.hidden = get("hidden");
  c.proj_dim = get("proj_dim");
  c.layers = get("layers");
  c.heads = get("heads");
  c.mlp_dim = get("mlp_dim");
  c.vocab_size = get("vocab_size");
  c.frames = get("frames");
  c.patches = get("patches");
  c.patch_dim = get("patch_dim");
  c.max_tokens = get("max_tokens");
  c.positional = get("positional") != 0;
  c.seed = get("seed");
  return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const DualEncoder& model,
                     const CheckpointMeta& meta) {
  std::vector<std::string> header;
  header.push_back(encoder_line(model.config));
  header.push_back("step " + std::to_string(meta.step));
  header.push_back("epoch " + std::to_string(meta.epoch));
  header.push_back("config_hash " + (meta.config_hash.empty() ? std::string("-") : meta.config_hash));
  std::string tail = "loss_tail " + std::to_string(meta.loss_tail.size());
  for (double v : meta.loss_tail) tail += " " + format_double(v);
  header.push_back(tail);

  io::ByteWriter w;
  const auto& ps = model.params;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const Tensor& t = ps.values()[i];
    std::string line = "tensor " + ps.names()[i] + " " + std::to_string(t.rank());
    for (std::size_t e : t.shape()) line += " " + std::to_string(e);
    header.push_back(line);
    w.f64s(t.values());
  }
  io::write_container(path, kMagic, kVersion, header, w.bytes());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string file = path.string();
  const io::Container c = io::read_container(path, kMagic, kVersion);
  Checkpoint ck;
  bool have_encoder = false;
  std::vector<std::pair<std::string, Shape>> tensors;
  for (const auto& line : c.header_lines) {
    const auto f = io::fields(line);
    if (f.empty()) continue;
    const auto need = [&](std::size_t n) {
      if (f.size() < n) {
        throw FormatError(FormatError::Kind::kMalformedHeader, file + ": short line '" + line + "'");
      }
    };
    if (f[0] == "encoder") {
      ck.model.config = parse_encoder(f, file);
      have_encoder = true;
    } else if (f[0] == "step") {
      need(2);
      ck.meta.step = parse_size(f[1], file);
    } else if (f[0] == "epoch") {
      need(2);
      ck.meta.epoch = parse_size(f[1], file);
    } else if (f[0] == "config_hash") {
      need(2);
      ck.meta.config_hash = f[1] == "-" ? std::string() : f[1];
    } else if (f[0] == "loss_tail") {
      need(2);
      const std::size_t n = parse_size(f[1], file);
      need(2 + n);
      for (std::size_t i = 0; i < n; ++i) ck.meta.loss_tail.push_back(parse_double(f[2 + i], file));
    } else if (f[0] == "tensor") {
      need(3);
      const std::size_t rank = parse_size(f[2], file);
      need(3 + rank);
      Shape shape;
      for (std::size_t i = 0; i < rank; ++i) shape.push_back(parse_size(f[3 + i], file));
      tensors.emplace_back(f[1], std::move(shape));
    } else {
      throw FormatError(FormatError::Kind::kMalformedHeader, file + ": unknown record '" + f[0] + "'");
    }
  }
  if (!have_encoder) throw FormatError(FormatError::Kind::kMalformedHeader, file + ": no encoder line");

  io::ByteReader r(c.payload, file);
  for (auto& [name, shape] : tensors) {
    Tensor t(shape);
    r.f64s(t.mutable_values());
    ck.model.params.add(name, std::move(t));
  }
  if (r.remaining() != 0) {
    throw FormatError(FormatError::Kind::kMalformedHeader, file + ": payload larger than declared tensors");
  }
  return ck;
}

}  // namespace rap
