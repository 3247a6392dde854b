# %% [markdown]
# # 2D2V cancellation through the experiment runner
#
# Same as ``vpctl run --preset two_stream_2d_cancellation``. Takes a few
# minutes at desk scale.

# %%
from vpctl.experiments import run_experiment, summary_line

summary = run_experiment({"experiment": {"preset": "two_stream_2d_cancellation",
                                         "out": "runs/two_stream_2d"}})
print(summary_line(summary))
