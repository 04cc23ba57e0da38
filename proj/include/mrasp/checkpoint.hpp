#pragma once

// Checkpoint file format:
//   line "MRASP1"
//   key=value config block (UTF-8, one per line)
//   blank line
//   per tensor: header `name ndim dims...` then row-major float64,
//   little-endian
//   trailing 4-byte little-endian CRC-32 of the tensor section

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "mrasp/common.hpp"
#include "mrasp/model.hpp"
#include "mrasp/optim.hpp"

namespace mrasp {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

inline constexpr const char* kCheckpointMagic = "MRASP1";

struct Checkpoint {
  ModelParameters params;
  std::optional<AdamState> optimizer;
  uint64_t vocab_hash = 0;
  uint64_t step = 0;
  double final_loss = 0.0;
};

namespace detail {

class CrcWriter {
public:
  explicit CrcWriter(std::ostream& out) : out_(out) {}

  void write(const void* data, size_t len) {
    out_.write(static_cast<const char*>(data), std::streamsize(len));
    crc_ = crc32(data, len, crc_);  // crc32 chains on finalized values
  }

  void write_line(const std::string& s) { write(s.data(), s.size()); write("\n", 1); }

  uint32_t crc() const { return crc_; }

private:
  std::ostream& out_;
  uint32_t crc_ = 0;
};

inline void write_tensor(CrcWriter& w, const std::string& name, const Mat& m) {
  std::ostringstream header;
  header << name << " 2 " << m.rows << ' ' << m.cols;
  w.write_line(header.str());
  w.write(m.a.data(), m.a.size() * sizeof(double));
}

inline std::string read_line(std::istream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("MalformedCheckpoint: truncated '" + path + "'");
  return line;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("IoError: cannot write '" + path + "'");
  const ModelConfig& c = ckpt.params.config;
  out << kCheckpointMagic << '\n';
  out << "enc_layers=" << c.enc_layers << '\n';
  out << "dec_layers=" << c.dec_layers << '\n';
  out << "model_dim=" << c.model_dim << '\n';
  out << "heads=" << c.heads << '\n';
  out << "ffn_dim=" << c.ffn_dim << '\n';
  out << "max_positions=" << c.max_positions << '\n';
  out << "vocab_size=" << c.vocab_size << '\n';
  {
    std::ostringstream fp;
    fp.precision(17);
    fp << "dropout=" << c.dropout << "\nlabel_smoothing=" << c.label_smoothing
       << "\nfinal_loss=" << ckpt.final_loss << '\n';
    out << fp.str();
  }
  out << "step=" << ckpt.step << '\n';
  out << "vocab_hash=" << ckpt.vocab_hash << '\n';
  out << "has_optimizer=" << (ckpt.optimizer ? 1 : 0) << '\n';
  if (ckpt.optimizer) out << "adam_step=" << ckpt.optimizer->step << '\n';
  out << '\n';

  detail::CrcWriter w(out);
  for (const auto& nt : tensor_list(ckpt.params)) detail::write_tensor(w, nt.name, *nt.mat);
  if (ckpt.optimizer) {
    for (const auto& nt : tensor_list(ckpt.optimizer->m))
      detail::write_tensor(w, "adam.m." + nt.name, *nt.mat);
    for (const auto& nt : tensor_list(ckpt.optimizer->v))
      detail::write_tensor(w, "adam.v." + nt.name, *nt.mat);
  }
  const uint32_t crc = w.crc();
  out.write(reinterpret_cast<const char*>(&crc), 4);
  if (!out) throw DataError("IoError: write failure on '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("IoError: cannot open '" + path + "'");
  if (detail::read_line(in, path) != kCheckpointMagic)
    throw DataError("MalformedCheckpoint: bad magic in '" + path + "'");

  std::map<std::string, std::string> kv;
  for (;;) {
    std::string line = detail::read_line(in, path);
    if (line.empty()) break;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("MalformedCheckpoint: bad config line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError("MalformedCheckpoint: missing key '" + key + "'");
    return it->second;
  };

  ModelConfig cfg;
  Checkpoint ckpt;
  bool has_opt = false;
  try {
    cfg.enc_layers = std::stoull(need("enc_layers"));
    cfg.dec_layers = std::stoull(need("dec_layers"));
    cfg.model_dim = std::stoull(need("model_dim"));
    cfg.heads = std::stoull(need("heads"));
    cfg.ffn_dim = std::stoull(need("ffn_dim"));
    cfg.max_positions = std::stoull(need("max_positions"));
    cfg.vocab_size = std::stoull(need("vocab_size"));
    cfg.dropout = std::stod(need("dropout"));
    cfg.label_smoothing = std::stod(need("label_smoothing"));
    ckpt.params = make_parameters(cfg);
    ckpt.step = std::stoull(need("step"));
    ckpt.final_loss = std::stod(need("final_loss"));
    ckpt.vocab_hash = std::stoull(need("vocab_hash"));
    has_opt = need("has_optimizer") == "1";
    if (has_opt) {
      ckpt.optimizer = AdamState::fresh(ckpt.params);
      ckpt.optimizer->step = std::stoull(need("adam_step"));
    }
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    // covers bad numeric strings and config combinations validate() rejects
    throw DataError("MalformedCheckpoint: bad config in '" + path + "': " + e.what());
  }

  // Tensor section, CRC-checked.
  uint32_t crc = 0;
  auto read_tensor = [&](const std::string& want_name, Mat& m) {
    std::string header = detail::read_line(in, path);
    crc = crc32(header.data(), header.size(), crc);
    crc = crc32("\n", 1, crc);
    std::istringstream hs(header);
    std::string name;
    size_t ndim = 0, rows = 0, cols = 0;
    hs >> name >> ndim >> rows >> cols;
    if (!hs || ndim != 2 || name != want_name)
      throw DataError("MalformedCheckpoint: expected tensor '" + want_name + "', got '" +
                      header + "'");
    if (rows != m.rows || cols != m.cols)
      throw DataError("MalformedCheckpoint: shape mismatch for '" + name + "'");
    in.read(reinterpret_cast<char*>(m.a.data()),
            std::streamsize(m.a.size() * sizeof(double)));
    if (!in) throw DataError("MalformedCheckpoint: truncated tensor '" + name + "'");
    crc = crc32(m.a.data(), m.a.size() * sizeof(double), crc);
  };

  for (auto& nt : tensor_list(ckpt.params)) read_tensor(nt.name, *nt.mat);
  if (has_opt) {
    for (auto& nt : tensor_list(ckpt.optimizer->m)) read_tensor("adam.m." + nt.name, *nt.mat);
    for (auto& nt : tensor_list(ckpt.optimizer->v)) read_tensor("adam.v." + nt.name, *nt.mat);
  }

  uint32_t stored = 0;
  in.read(reinterpret_cast<char*>(&stored), 4);
  if (!in) throw DataError("MalformedCheckpoint: missing checksum in '" + path + "'");
  if (stored != crc)
    throw DataError("MalformedCheckpoint: checksum mismatch in '" + path + "'");
  return ckpt;
}

}  // namespace mrasp
