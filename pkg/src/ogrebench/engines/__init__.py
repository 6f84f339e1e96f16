"""The four K-means execution models over the simulated fabric."""

from .iterative import run_iterative_collective
from .mapreduce import run_mapreduce
from .message_passing import run_message_passing
from .pilot import run_pilot_mapreduce

ENGINES = {
    "mapreduce": run_mapreduce,
    "iterative": run_iterative_collective,
    "mpi-like": run_message_passing,
    "pilot": run_pilot_mapreduce,
}
