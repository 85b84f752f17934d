#include "mgkd/cli/model_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <vector>

#include "mgkd/errors.hpp"

namespace mgkd::cli {
namespace {

using numcore::MatrixXd;

constexpr std::array<char, 4> kMagic{'M', 'G', 'K', 'D'};

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b;
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(b.data(), b.size());
}

void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  std::array<char, 8> b;
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xFFu);
  out.write(b.data(), b.size());
}

void read_exact(std::istream& in, char* dst, std::size_t n, const char* what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw ParseError(std::string("model file truncated in ") + what);
}

std::uint32_t get_u32(std::istream& in, const char* what) {
  std::array<unsigned char, 4> b;
  read_exact(in, reinterpret_cast<char*>(b.data()), b.size(), what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in, const char* what) {
  std::array<unsigned char, 8> b;
  read_exact(in, reinterpret_cast<char*>(b.data()), b.size(), what);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

std::vector<const MatrixXd*> tensors_of(const ModelFile& f, const MatrixXd& mean, const MatrixXd& std) {
  std::vector<const MatrixXd*> out{&mean, &std};
  f.model.parameters().for_each([&](const std::string&, const MatrixXd& t) { out.push_back(&t); });
  return out;
}

}  // namespace

std::string_view to_string(InputKind k) {
  switch (k) {
    case InputKind::kPre: return "pre";
    case InputKind::kIn: return "in";
    case InputKind::kPreIn: return "pre+in";
  }
  return "pre";
}

bool ModelFile::operator==(const ModelFile& other) const {
  return input == other.input && mean == other.mean && std == other.std && model.shape() == other.model.shape() &&
         model.parameters() == other.model.parameters();
}

void write_model(const ModelFile& file, std::ostream& out) {
  const auto& shape = file.model.shape();
  if (static_cast<std::size_t>(file.mean.size()) != shape.input_dim ||
      static_cast<std::size_t>(file.std.size()) != shape.input_dim) {
    throw DimensionError("write_model: scaler width does not match the model input");
  }
  const MatrixXd mean = file.mean;
  const MatrixXd std = file.std;
  const auto tensors = tensors_of(file, mean, std);

  out.write(kMagic.data(), kMagic.size());
  put_u32(out, kModelFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(file.input));
  put_u32(out, static_cast<std::uint32_t>(shape.hidden_dims.size()));
  put_f64(out, shape.dropout_rate);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const MatrixXd* t : tensors) {
    put_u32(out, static_cast<std::uint32_t>(t->rows()));
    put_u32(out, static_cast<std::uint32_t>(t->cols()));
  }
  for (const MatrixXd* t : tensors) {
    for (Eigen::Index i = 0; i < t->size(); ++i) put_f64(out, t->data()[i]);
  }
}

void save_model(const ModelFile& file, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write model file '" + path.string() + "'");
  write_model(file, out);
  if (!out) throw Error("failed writing model file '" + path.string() + "'");
}

ModelFile read_model(std::istream& in) {
  std::array<char, 4> magic;
  read_exact(in, magic.data(), magic.size(), "magic");
  if (magic != kMagic) throw ParseError("not a model file: bad magic bytes");
  const std::uint32_t version = get_u32(in, "header");
  if (version != kModelFormatVersion) {
    throw ParseError("unsupported model file version " + std::to_string(version));
  }
  const std::uint32_t kind = get_u32(in, "header");
  if (kind > static_cast<std::uint32_t>(InputKind::kPreIn)) throw ParseError("unknown input kind " + std::to_string(kind));
  const std::uint32_t layers = get_u32(in, "header");
  const double dropout = get_f64(in, "header");
  const std::uint32_t count = get_u32(in, "header");
  if (count != 2 * layers + 4) {
    throw ParseError("shape table lists " + std::to_string(count) + " tensors, expected " +
                     std::to_string(2 * layers + 4));
  }
  std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes(count);
  for (auto& [r, c] : shapes) {
    r = get_u32(in, "shape table");
    c = get_u32(in, "shape table");
  }

  // Scaler rows are 1 x d; layer l is (in x out) weights then (1 x out) bias.
  const std::uint32_t input_dim = shapes[0].second;
  auto expect = [&](std::size_t i, std::uint32_t rows, std::uint32_t cols) {
    if (shapes[i].first != rows || shapes[i].second != cols) {
      throw ParseError("shape table entry " + std::to_string(i) + " is " + std::to_string(shapes[i].first) + "x" +
                       std::to_string(shapes[i].second) + ", expected " + std::to_string(rows) + "x" +
                       std::to_string(cols));
    }
  };
  if (input_dim == 0) throw ParseError("model input width is zero");
  expect(0, 1, input_dim);
  expect(1, 1, input_dim);
  numcore::MlpShape shape{input_dim, {}, dropout};
  std::uint32_t width = input_dim;
  for (std::uint32_t l = 0; l < layers; ++l) {
    const std::uint32_t out = shapes[2 + 2 * l].second;
    expect(2 + 2 * l, width, out);
    expect(3 + 2 * l, 1, out);
    shape.hidden_dims.push_back(out);
    width = out;
  }
  expect(count - 2, width, 1);
  expect(count - 1, 1, 1);

  ModelFile file;
  file.input = static_cast<InputKind>(kind);
  try {
    file.model = numcore::MlpModel(shape);
  } catch (const ConfigError& e) {
    throw ParseError(std::string("invalid model header: ") + e.what());
  }
  MatrixXd mean(1, input_dim), std(1, input_dim);
  std::vector<MatrixXd*> targets{&mean, &std};
  file.model.parameters().for_each([&](const std::string&, MatrixXd& t) { targets.push_back(&t); });
  for (MatrixXd* t : targets) {
    for (Eigen::Index i = 0; i < t->size(); ++i) t->data()[i] = get_f64(in, "tensor data");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError("model file has trailing bytes");
  file.mean = mean.row(0);
  file.std = std.row(0);
  return file;
}

ModelFile load_model(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifactError("model file '" + path.string() + "' does not exist");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open model file '" + path.string() + "'");
  try {
    return read_model(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

MatrixXd model_input(const ModelFile& file, const data::TwoPhaseDataset& raw) {
  MatrixXd x;
  switch (file.input) {
    case InputKind::kPre: x = raw.x_pre; break;
    case InputKind::kIn: x = raw.x_in; break;
    case InputKind::kPreIn: x = raw.concatenated(); break;
  }
  if (static_cast<std::size_t>(x.cols()) != file.model.input_dim()) {
    throw DimensionError("model reads " + std::to_string(file.model.input_dim()) + " " +
                         std::string(to_string(file.input)) + " columns, dataset provides " +
                         std::to_string(x.cols()));
  }
  return data::standardize_block(x, file.mean, file.std);
}

}  // namespace mgkd::cli
