#include "msfm/dataset_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "msfm/errors.hpp"

namespace msfm {

namespace {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; byte swapping not implemented");

void write_u32(std::ofstream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::ifstream& in, const char* what) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw IoError(std::string("truncated file while reading ") + what);
    return v;
}

void write_f64(std::ofstream& out, const double* data, std::size_t count) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 8));
}

void read_f64(std::ifstream& in, double* data, std::size_t count, const char* what) {
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * 8));
    if (!in) throw IoError(std::string("truncated file while reading ") + what);
}

}  // namespace

void save_dataset(const std::string& path, const Dataset& dataset) {
    if (dataset.count() < 1) throw IoError("refusing to save empty dataset");
    if (dataset.condition_dim() > 0 && dataset.conditions.rows() != dataset.count()) {
        throw ShapeError("dataset: conditions row count differs from samples");
    }
    if (!dataset.samples.all_finite() ||
        (dataset.conditions.size() > 0 && !dataset.conditions.all_finite())) {
        throw NumericError("dataset contains non-finite entries");
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);

    out.write("MSFM", 4);
    write_u32(out, 1);
    write_u32(out, static_cast<std::uint32_t>(dataset.count()));
    write_u32(out, static_cast<std::uint32_t>(dataset.sample_dim()));
    write_u32(out, static_cast<std::uint32_t>(dataset.condition_dim()));
    write_f64(out, dataset.samples.data(), static_cast<std::size_t>(dataset.samples.size()));
    if (dataset.conditions.size() > 0) {
        write_f64(out, dataset.conditions.data(),
                  static_cast<std::size_t>(dataset.conditions.size()));
    }
    const std::string meta = dataset.metadata.dump();
    write_u32(out, static_cast<std::uint32_t>(meta.size()));
    out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    if (!out) throw IoError("write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);

    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "MSFM", 4) != 0) throw IoError("bad magic in " + path);

    const std::uint32_t version = read_u32(in, "version");
    if (version != 1) {
        throw IoError("unsupported dataset version " + std::to_string(version));
    }
    const std::uint32_t n = read_u32(in, "sample count");
    const std::uint32_t d = read_u32(in, "sample dim");
    const std::uint32_t c = read_u32(in, "condition dim");
    if (n == 0 || d == 0) throw IoError("dataset file declares no samples");

    Dataset ds;
    ds.samples = Array::zeros(static_cast<int>(n), static_cast<int>(d));
    read_f64(in, ds.samples.data(), static_cast<std::size_t>(n) * d, "samples");
    if (c > 0) {
        ds.conditions = Array::zeros(static_cast<int>(n), static_cast<int>(c));
        read_f64(in, ds.conditions.data(), static_cast<std::size_t>(n) * c, "conditions");
    }
    const std::uint32_t meta_len = read_u32(in, "metadata length");
    std::string meta(meta_len, '\0');
    in.read(meta.data(), static_cast<std::streamsize>(meta_len));
    if (!in) throw IoError("truncated file while reading metadata");
    ds.metadata = nlohmann::json::parse(meta, nullptr, false);
    if (ds.metadata.is_discarded()) throw IoError("corrupt metadata JSON in " + path);
    return ds;
}

}  // namespace msfm
