# %% [markdown]
# # Nonparametric distance between sequences
#
# Events become vectors [t, one_hot(c)]. The distance averages MMDs over
# index subsets; the singleton approximation keeps only C+1 of them.

# %%
from gwtpp.core import Event, EventSequence
from gwtpp.seqdist import distance_matrix, kernel_from_distances, median_bandwidth, pair_distance
from gwtpp.simulate import default_plan, make_synthetic

a = EventSequence("a", (Event(1.0, 0),), 10.0)
b = EventSequence("b", (Event(3.0, 0),), 10.0)
print("full", pair_distance(a, b, "full", 1, 10.0), "singleton", pair_distance(a, b, "singleton", 1, 10.0))

# %%
ds = make_synthetic(default_plan(("Hawkes", "InhomPoisson"), 20, seed=1))
D = distance_matrix(ds.sequences, "singleton", ds.num_types, ds.horizon)
K = kernel_from_distances(D, median_bandwidth(D))
same = ds.labels[:, None] == ds.labels[None, :]
print("mean kernel within clusters", K[same].mean().round(4), "across", K[~same].mean().round(4))

# %% [markdown]
# With exp(-d / 2 sigma^2) and sigma at the median distance the entries sit
# close to one; the squared form exp(-d^2 / 2 sigma^2) spreads them out.

# %%
Ks = kernel_from_distances(D, median_bandwidth(D), squared=True)
print("literal range", K.min().round(3), K.max().round(3), "| squared range", Ks.min().round(3))
