"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command line interface:
2 for validation failures, 3 for missing artifacts and 4 for numeric failures.
"""


class WildfireGenomeError(Exception):
    exit_code = 1

    def to_dict(self):
        return {"error": type(self).__name__, "message": str(self)}


class ValidationError(WildfireGenomeError, ValueError):
    exit_code = 2


class MissingColumn(ValidationError):
    pass


class DuplicateCellId(ValidationError):
    def __init__(self, cell_id, region_id):
        self.cell_id = cell_id
        self.region_id = region_id
        super().__init__(f"duplicate cell_id {cell_id!s} in region {region_id!r}")


class OutOfRange(ValidationError):
    def __init__(self, row, column, value):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"row {row}: {column}={value!r} outside its allowed range")


class UnparseableValue(ValidationError):
    def __init__(self, row, column, value):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"row {row}: cannot parse {column}={value!r}")


class DomainError(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class TooFewRows(ValidationError):
    pass


class ClassTooSmall(ValidationError):
    pass


class TooManyFeatures(ValidationError):
    pass


class EmptyGrid(ValidationError):
    pass


class KExceedsFeatures(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class LabelOutOfRange(ValidationError):
    pass


class MissingCoverage(ValidationError):
    pass


class ConfigInvalid(ValidationError):
    pass


class MissingArtifact(WildfireGenomeError):
    exit_code = 3

    def __init__(self, stage, detail=""):
        self.stage = stage
        msg = f"missing artifact from stage {stage!r}"
        if detail:
            msg += f": {detail}"
        msg += f" (run the '{stage}' subcommand first)"
        super().__init__(msg)

    def to_dict(self):
        d = super().to_dict()
        d["stage"] = self.stage
        return d


class MissingRegionModel(MissingArtifact):
    def __init__(self, region):
        self.region = region
        super().__init__("train", f"no fitted model for region {region!r}")


class NumericError(WildfireGenomeError, ArithmeticError):
    exit_code = 4


class RankDeficient(NumericError):
    pass


class ZeroVariance(NumericError):
    pass


class DegenerateMarginals(NumericError):
    pass


class DegenerateFeature(NumericError):
    pass
