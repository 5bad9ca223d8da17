// Persistence of a dark spot ringed by bright pixels: one loop is born when
// the ring closes at 0.2 and dies when the centre fills in at 0.9.

#include <iostream>
#include <memory>

#include <topoembed/persistence.hpp>

int main() {
    using namespace topoembed;
    const ingest::ScalarGrid grid{3, 3, {0.2, 0.1, 0.2, 0.1, 0.9, 0.1, 0.2, 0.1, 0.2}};
    auto complex = std::make_shared<const filtration::SimplicialComplex>(filtration::build_complex(3, 3));
    const auto topology = persistence::compute_topology(complex, grid, "ring");

    for (const auto& p : topology.diagram.pairs)
        std::cout << "dim " << p.dim << "  [" << p.birth << ", " << p.death << ")\n";
    for (const auto& cycle : topology.cycles) {
        std::cout << "cycle of the pair born at " << cycle.pair.birth << ":";
        for (const auto& e : cycle.edges) std::cout << " (" << e[0] << "," << e[1] << ")";
        std::cout << "\n";
    }
}
