from pathlib import Path
import sys

sys.path.append(str(Path(__file__).resolve().parents[1]))

from app.services.experiments import count_report


SETTINGS = [
    ("bert-base", "classifier", 3),
    ("bert-base", "qa_span", 3),
    ("bert-base", "qa_span", 2),
    ("bert-large", "classifier", 3),
    ("roberta-base", "classifier", 3),
]


def main() -> None:
    print(f"{'arch':<14}{'head':<12}{'T':>3}{'fine-tune':>12}{'progtune':>12}{'reduction':>11}")
    for arch, head, epochs in SETTINGS:
        report = count_report(arch, epochs, mode="progtune", head=head)
        print(
            f"{arch:<14}{head:<12}{epochs:>3}"
            f"{report.full_ledger.cumulative / 1e6:>11.1f}M{report.ledger.cumulative / 1e6:>11.1f}M"
            f"{report.reduction:>11.3f}"
        )


if __name__ == "__main__":
    main()
