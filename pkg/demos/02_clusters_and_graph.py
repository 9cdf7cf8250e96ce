"""Look inside the pixel network: fuzzy clusters, neighbor weights and the
effective neighborhoods the abundance update actually averages over.

    python3 demos/02_clusters_and_graph.py [output_dir]
"""
import sys
from pathlib import Path

import numpy as np

from cmtunmix import SynthSpec, build_graph, effective_neighbors, fcm_cluster, generate_scene, standin_library
from cmtunmix.io import write_abundance_maps, write_label_map

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output/graph")
out.mkdir(parents=True, exist_ok=True)

scene = generate_scene(SynthSpec(width=24, height=24, c=4, snr_db=30.0, seed=2), standin_library())
cube = scene.noisy

# Fuzzy c-means on the raw spectra; crisp labels come from the largest membership.
res = fcm_cluster(cube, 4, seed=0)
print(f"FCM: {res.iterations} iterations, objective {res.objective_history[0]:.3f} -> "
      f"{res.objective_history[-1]:.3f}")
print("cluster sizes:", np.bincount(res.labels).tolist())
print(f"mean max-membership: {res.membership.max(axis=0).mean():.3f}")

# Neighbor weights: cosine similarity to each grid neighbor, normalized per pixel.
graph = build_graph(cube, connectivity=8, labels=res.labels)
k = 12 * 24 + 12
print(f"\npixel {k}: neighbors {graph.neighbors[k].tolist()}")
print("           weights  ", np.round(graph.rho[k], 4).tolist())
print("           same-cluster neighbors", effective_neighbors(graph, k).tolist())

# Cluster boundaries cut the network: count pixels left with no partner.
isolated = sum(effective_neighbors(graph, j).size == 0 for j in range(cube.n_pixels))
W = graph.weight_matrix()
print(f"\nedges kept inside clusters: {W.nnz} of {sum(len(n) for n in graph.neighbors)}; "
      f"isolated pixels: {isolated}")

write_label_map(out / "labels", res.labels, cube.width, cube.height, 4)
write_abundance_maps(out, scene.S_true.data, cube.width, cube.height, prefix="true_abundance")
graph.to_csv(out / "graph.csv")
print(f"label map, true abundance maps and graph.csv written to {out}")
