// Reads an IDX image/label pair, keeps a few items per digit and prints the
// classical MDS layout of their persistence images as CSV.
//
//   idx_mds data/mnist5k/mnist5k-images-idx3-ubyte.gz data/mnist5k/mnist5k-labels-idx1-ubyte.gz 20

#include <cstdlib>
#include <iostream>
#include <memory>

#include <topoembed/analysis.hpp>
#include <topoembed/ingest.hpp>
#include <topoembed/persistence.hpp>
#include <topoembed/vectorize.hpp>

int main(int argc, char** argv) {
    using namespace topoembed;
    if (argc < 3) {
        std::cerr << "usage: idx_mds IMAGES LABELS [PER_CLASS]\n";
        return 64;
    }
    const std::size_t per_class = argc > 3 ? std::strtoul(argv[3], nullptr, 10) : 10;
    try {
        const auto corpus = ingest::load_idx(argv[1], argv[2]);
        const auto items = ingest::sample_per_class(corpus, per_class, 42);
        auto complex = std::make_shared<const filtration::SimplicialComplex>(
            filtration::build_complex(items.front().width, items.front().height));

        std::vector<vectorize::PersistenceImage> images;
        for (const auto& item : items) {
            const auto topology = persistence::compute_topology(complex, ingest::to_filtration_function(item), item.id);
            images.push_back(vectorize::persistence_image(topology.diagram));
        }
        const auto layout = analysis::classical_mds(analysis::distance_matrix(images));

        std::cout << "id,label,x,y\n";
        for (std::size_t i = 0; i < items.size(); ++i)
            std::cout << items[i].id << "," << items[i].label << "," << layout.x(i) << "," << layout.y(i) << "\n";
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
