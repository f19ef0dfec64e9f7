#pragma once

namespace nvlimit::detail {

struct LebedevTable {
    int order;
    int points;
    const double* data; // rows of (x, y, z, weight); weights sum to 4 pi
};

extern const LebedevTable lebedev_tables[];
extern const int lebedev_table_count;

} // namespace nvlimit::detail
