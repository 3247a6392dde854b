# %% [markdown]
# # Training a low-rank feedback controller
#
# A short adjoint training run at a reduced grid. The future loss is the
# norm of the perturbation at twice the training horizon.

# %%
from vpctl import PhaseGrid, TrainConfig, Trainer

cfg = TrainConfig(controller="low_rank_operator", grid=PhaseGrid(nx=32, nv=48),
                  horizon=10.0, iterations=40, adagrad_steps=10, eval_every=10, seed=1)
trainer = Trainer(cfg)
print("future loss before training:", trainer.evaluate())

# %%
best, record = trainer.train()
for it, loss in zip(record.eval_iterations, record.future_loss):
    print(f"iteration {it:3d}  future loss {loss:.4e}")
print("best iteration", record.best_iteration)
