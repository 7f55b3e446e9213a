"""Exception types shared across the toolkit."""


class ContractError(ValueError):
    """An input violates a documented precondition or invariant."""


class MissingClassError(ContractError):
    """A sample pool does not cover every class of the model under inspection."""

    def __init__(self, missing_classes):
        self.missing_classes = tuple(sorted(int(k) for k in missing_classes))
        plural = "es" if len(self.missing_classes) != 1 else ""
        super().__init__(
            f"pool has no sample predicted as class{plural} "
            f"{', '.join(str(k) for k in self.missing_classes)}"
        )


class TrainingError(RuntimeError):
    """Model training failed (divergence, non-finite loss, or an
    unsatisfiable attack construction)."""
