from progtune.modeling.counting import static_param_count
from progtune.modeling.encoder import build_model
from progtune.peft.methods import apply_peft
from progtune.schedule.ledger import count_updated_params, predicted_reduction
from progtune.schedule.stages import make_schedule
from progtune.tasks.generate import generate_task
from progtune.tasks.runconfig import load_run_config
from progtune.training.loop import train_run


def main():
    print("=== Progtuning demo ===")

    run = load_run_config("configs/keyword_tiny.yaml")
    task = generate_task(run.task)
    model, registry = build_model(run.model, seed=run.train.seed)
    apply_peft(model, registry, run.train.peft)

    schedule = make_schedule(run.model.num_blocks, run.train.epochs, run.train.schedule_variant())
    for t in range(1, schedule.num_epochs + 1):
        print(f"epoch {t}: blocks {list(schedule.blocks(t))} + embeddings + head")

    metrics, ledger = train_run(model, registry, schedule, task, run.train)
    for t in range(metrics.epochs):
        print(
            f"epoch {t + 1}: loss={metrics.loss[t]:.4f} train_acc={metrics.train_acc[t]:.3f} "
            f"eval_acc={metrics.eval_acc[t]:.3f} updated={ledger.per_epoch[t]}"
        )
    predicted = count_updated_params(schedule, registry)
    print(f"instrumented ledger matches prediction: {predicted.per_epoch == ledger.per_epoch}")

    counts = static_param_count("bert-base")
    print(f"BERT-base, 3 epochs: {counts.total() * 3 / 1e6:.1f}M updated under plain fine-tuning")
    print(f"Progtuning reduction (T=3): {predicted_reduction(12, 3, counts):.3f}")


if __name__ == "__main__":
    main()
