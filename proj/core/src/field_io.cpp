#include "homlab/field_io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace homlab {

namespace {

constexpr std::array<char, 4> kMagic = {'H', 'L', 'F', '1'};

static_assert(std::endian::native == std::endian::little,
              "field serialization assumes a little-endian host");

void check_record(const FieldRecord& r) {
    if (r.dim < 1 || r.side < 2 || r.components < 1) {
        throw std::runtime_error("malformed field header");
    }
    std::size_t n = 1;
    for (int i = 0; i < r.dim; ++i) n *= static_cast<std::size_t>(r.side);
    if (r.values.size() != n * static_cast<std::size_t>(r.components)) {
        throw std::runtime_error("field payload does not match header");
    }
}

template <class T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("truncated field file");
    return v;
}

std::string format_double(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    if (ec != std::errc()) throw std::runtime_error("failed to format value");
    return std::string(buf.data(), ptr);
}

double parse_double(const std::string& s) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw std::runtime_error("malformed value in field csv: '" + s + "'");
    }
    return v;
}

FieldRecord make(const TorusGrid& g, int components, std::vector<double> values) {
    return FieldRecord{g.dim(), g.side(), components, std::move(values)};
}

void expect_components(const FieldRecord& r, int c) {
    check_record(r);
    if (r.components != c) throw std::runtime_error("field has unexpected component count");
}

}  // namespace

FieldRecord to_record(const ScalarField& f) { return make(f.grid, 1, f.values); }
FieldRecord to_record(const VectorField& f) { return make(f.grid, f.grid.dim(), f.values); }
FieldRecord to_record(const MatrixField& f) {
    return make(f.grid, f.grid.dim() * f.grid.dim(), f.values);
}
FieldRecord to_record(const CoefficientField& f) { return make(f.grid, f.grid.dim(), f.diag); }

ScalarField scalar_from_record(const FieldRecord& r) {
    expect_components(r, 1);
    return ScalarField(r.grid(), r.values);
}

VectorField vector_from_record(const FieldRecord& r) {
    expect_components(r, r.dim);
    VectorField f(r.grid());
    f.values = r.values;
    return f;
}

MatrixField matrix_from_record(const FieldRecord& r) {
    expect_components(r, r.dim * r.dim);
    MatrixField f(r.grid());
    f.values = r.values;
    return f;
}

CoefficientField coefficients_from_record(const FieldRecord& r) {
    expect_components(r, r.dim);
    CoefficientField f(r.grid());
    f.diag = r.values;
    return f;
}

void write_binary(std::ostream& os, const FieldRecord& r) {
    check_record(r);
    os.write(kMagic.data(), kMagic.size());
    put<std::int32_t>(os, r.dim);
    put<std::int32_t>(os, r.side);
    put<std::int32_t>(os, r.components);
    os.write(reinterpret_cast<const char*>(r.values.data()),
             static_cast<std::streamsize>(r.values.size() * sizeof(double)));
    if (!os) throw std::runtime_error("failed to write field");
}

FieldRecord read_binary(std::istream& is) {
    std::array<char, 4> magic{};
    is.read(magic.data(), magic.size());
    if (!is || magic != kMagic) throw std::runtime_error("not a field file");
    FieldRecord r;
    r.dim = get<std::int32_t>(is);
    r.side = get<std::int32_t>(is);
    r.components = get<std::int32_t>(is);
    if (r.dim < 1 || r.dim > 8 || r.side < 2 || r.components < 1) {
        throw std::runtime_error("malformed field header");
    }
    std::size_t n = static_cast<std::size_t>(r.components);
    for (int i = 0; i < r.dim; ++i) n *= static_cast<std::size_t>(r.side);
    r.values.resize(n);
    is.read(reinterpret_cast<char*>(r.values.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw std::runtime_error("truncated field file");
    return r;
}

void write_csv(std::ostream& os, const FieldRecord& r) {
    check_record(r);
    os << r.dim << ',' << r.side << ',' << r.components << '\n';
    for (double v : r.values) os << format_double(v) << '\n';
    if (!os) throw std::runtime_error("failed to write field");
}

FieldRecord read_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("empty field csv");
    FieldRecord r;
    {
        std::istringstream hs(line);
        char c1 = 0, c2 = 0;
        hs >> r.dim >> c1 >> r.side >> c2 >> r.components;
        if (!hs || c1 != ',' || c2 != ',') throw std::runtime_error("malformed field csv header");
    }
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        r.values.push_back(parse_double(line));
    }
    check_record(r);
    return r;
}

void save_field(const std::filesystem::path& path, const FieldRecord& r) {
    const bool csv = path.extension() == ".csv";
    std::ofstream os(path, csv ? std::ios::out : std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    if (csv) write_csv(os, r); else write_binary(os, r);
}

FieldRecord load_field(const std::filesystem::path& path) {
    const bool csv = path.extension() == ".csv";
    std::ifstream is(path, csv ? std::ios::in : std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    return csv ? read_csv(is) : read_binary(is);
}

}  // namespace homlab
