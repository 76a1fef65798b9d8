#pragma once

// Flat serialization of lattice fields.
//
// Binary layout (little-endian): magic "HLF1", int32 d, int32 L,
// int32 components-per-site, then N * components doubles in linear-index
// order. The CSV layout carries the same header on its first line followed
// by one value per line, printed in shortest round-trip form.

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "homlab/lattice.hpp"

namespace homlab {

struct FieldRecord {
    int dim = 0;
    int side = 0;
    int components = 0;
    std::vector<double> values;

    TorusGrid grid() const { return TorusGrid(dim, side); }
};

FieldRecord to_record(const ScalarField& f);
FieldRecord to_record(const VectorField& f);
FieldRecord to_record(const MatrixField& f);
FieldRecord to_record(const CoefficientField& f);

ScalarField scalar_from_record(const FieldRecord& r);
VectorField vector_from_record(const FieldRecord& r);
MatrixField matrix_from_record(const FieldRecord& r);
CoefficientField coefficients_from_record(const FieldRecord& r);

void write_binary(std::ostream& os, const FieldRecord& r);
FieldRecord read_binary(std::istream& is);
void write_csv(std::ostream& os, const FieldRecord& r);
FieldRecord read_csv(std::istream& is);

void save_field(const std::filesystem::path& path, const FieldRecord& r);
FieldRecord load_field(const std::filesystem::path& path);

}  // namespace homlab
