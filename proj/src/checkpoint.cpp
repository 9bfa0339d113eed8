#include "cosrec/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "cosrec/errors.hpp"

namespace cosrec {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian float64");

namespace {

constexpr const char* kMagic = "cosrec-checkpoint v1";

std::string format_double(double v) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

}  // namespace

std::vector<std::pair<std::string, const Matrix*>> tensor_entries(const EncoderParams& p) {
  std::vector<std::pair<std::string, const Matrix*>> out;
  out.emplace_back("item_embeddings", &p.item_embeddings);
  out.emplace_back("position_embeddings", &p.position_embeddings);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& layer = p.layers[l];
    const std::string base = "layers." + std::to_string(l) + ".";
    for (std::size_t h = 0; h < layer.attn.w_q.size(); ++h) {
      const std::string hs = std::to_string(h);
      out.emplace_back(base + "attn.w_q." + hs, &layer.attn.w_q[h]);
      out.emplace_back(base + "attn.w_k." + hs, &layer.attn.w_k[h]);
      out.emplace_back(base + "attn.w_v." + hs, &layer.attn.w_v[h]);
    }
    out.emplace_back(base + "attn.w_o", &layer.attn.w_o);
    out.emplace_back(base + "ffn_w1", &layer.ffn_w1);
    out.emplace_back(base + "ffn_b1", &layer.ffn_b1);
    out.emplace_back(base + "ffn_w2", &layer.ffn_w2);
    out.emplace_back(base + "ffn_b2", &layer.ffn_b2);
    out.emplace_back(base + "ln1_gain", &layer.ln1_gain);
    out.emplace_back(base + "ln1_bias", &layer.ln1_bias);
    out.emplace_back(base + "ln2_gain", &layer.ln2_gain);
    out.emplace_back(base + "ln2_bias", &layer.ln2_bias);
  }
  out.emplace_back("head_w", &p.head_w);
  out.emplace_back("head_b", &p.head_b);
  return out;
}

void save_checkpoint(const std::string& path, const EncoderParams& params,
                     const ModelConfig& model, const std::string& config_echo) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);

  auto entries = tensor_entries(params);
  std::vector<std::pair<std::string, double>> scalars;
  for (std::size_t l = 0; l < params.layers.size(); ++l)
    scalars.emplace_back("layers." + std::to_string(l) + ".attn.m", params.layers[l].attn.m);

  out << kMagic << "\n";
  out << "config " << config_echo << "\n";
  out << "model " << model.vocab << " " << model.dim << " " << model.layers << " "
      << model.attn.heads << " " << model.max_seq << " " << mechanism_name(model.attn.mechanism)
      << " " << format_double(model.attn.eps) << " " << format_double(model.attn.alpha) << " "
      << model.attn.tile_size << " " << format_double(model.dropout) << " "
      << format_double(model.ln_eps) << " " << (model.attn.linear_denominator ? 1 : 0) << "\n";
  out << "tensors " << entries.size() + scalars.size() << "\n";
  std::size_t offset = 0;
  for (const auto& [name, m] : entries) {
    out << name << " " << m->rows() << " " << m->cols() << " " << offset << "\n";
    offset += m->size() * sizeof(double);
  }
  for (const auto& [name, v] : scalars) {
    (void)v;
    out << name << " 1 1 " << offset << "\n";
    offset += sizeof(double);
  }
  out << "blob " << offset << "\n";
  for (const auto& [name, m] : entries)
    out.write(reinterpret_cast<const char*>(m->data()),
              static_cast<std::streamsize>(m->size() * sizeof(double)));
  for (const auto& [name, v] : scalars)
    out.write(reinterpret_cast<const char*>(&v), sizeof(double));
  if (!out) throw DataError("short write on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);

  std::string line;
  if (!std::getline(in, line) || line != kMagic)
    throw DataError("not a checkpoint file: " + path);

  Checkpoint ck;
  if (!std::getline(in, line) || line.rfind("config ", 0) != 0)
    throw DataError("checkpoint missing config echo");
  ck.config_echo = line.substr(7);

  if (!std::getline(in, line) || line.rfind("model ", 0) != 0)
    throw DataError("checkpoint missing model line");
  {
    std::istringstream ms(line.substr(6));
    std::string mech;
    int lin_den = 1;
    ms >> ck.model.vocab >> ck.model.dim >> ck.model.layers >> ck.model.attn.heads >>
        ck.model.max_seq >> mech >> ck.model.attn.eps >> ck.model.attn.alpha >>
        ck.model.attn.tile_size >> ck.model.dropout >> ck.model.ln_eps >> lin_den;
    if (!ms) throw DataError("malformed checkpoint model line");
    ck.model.attn.mechanism = mechanism_from_string(mech);
    ck.model.attn.linear_denominator = lin_den != 0;
  }

  if (!std::getline(in, line) || line.rfind("tensors ", 0) != 0)
    throw DataError("checkpoint missing tensor manifest");
  const std::size_t count = std::stoull(line.substr(8));

  struct Entry {
    std::string name;
    std::size_t rows, cols, offset;
  };
  std::vector<Entry> manifest(count);
  for (auto& e : manifest) {
    if (!std::getline(in, line)) throw DataError("truncated checkpoint manifest");
    std::istringstream es(line);
    es >> e.name >> e.rows >> e.cols >> e.offset;
    if (!es) throw DataError("malformed manifest entry: " + line);
  }
  if (!std::getline(in, line) || line.rfind("blob ", 0) != 0)
    throw DataError("checkpoint missing blob header");

  ck.params = init_encoder(ck.model, 0);
  std::map<std::string, Matrix*> slots;
  {
    auto entries = tensor_entries(ck.params);
    for (auto& [name, m] : entries) slots[name] = const_cast<Matrix*>(m);
  }

  const std::streampos blob_start = in.tellg();
  for (const auto& e : manifest) {
    in.seekg(blob_start + static_cast<std::streamoff>(e.offset));
    if (e.name.size() > 2 && e.name.rfind(".m") == e.name.size() - 2 &&
        e.name.rfind("layers.", 0) == 0) {
      const std::size_t l = std::stoull(e.name.substr(7));
      if (l >= ck.params.layers.size()) throw DataError("manifest layer out of range: " + e.name);
      double v = 0.0;
      in.read(reinterpret_cast<char*>(&v), sizeof(double));
      ck.params.layers[l].attn.m = v;
      continue;
    }
    auto it = slots.find(e.name);
    if (it == slots.end()) throw DataError("unknown tensor in checkpoint: " + e.name);
    Matrix& m = *it->second;
    if (m.rows() != e.rows || m.cols() != e.cols)
      throw DataError("tensor shape mismatch for " + e.name);
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  if (!in) throw DataError("truncated checkpoint blob: " + path);
  return ck;
}

}  // namespace cosrec
