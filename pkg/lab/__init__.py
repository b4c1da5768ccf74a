# Lab package — synthetic streams, evaluation and parameter sweeps
# generator: benign personas + attack injection (seeded)
# evaluation: confusion counts, attack latency, losses, plot data
# sweep: grid over window / threshold parameters
