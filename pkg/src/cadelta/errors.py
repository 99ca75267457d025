"""Exception hierarchy shared by all cadelta modules."""


class CadeltaError(Exception):
    """Base class; `code` feeds the service's JSON error bodies."""

    code = "internal_error"


class InvalidArgument(CadeltaError):
    code = "invalid_argument"


class SingularTransform(CadeltaError):
    code = "singular_transform"


class CrsMismatch(CadeltaError):
    code = "crs_mismatch"


class NonMetricCrs(CadeltaError):
    code = "non_metric_crs"


class MissingGeoreference(CadeltaError):
    code = "missing_georeference"


class WorldFileMalformed(CadeltaError):
    code = "world_file_malformed"


class DecodeError(CadeltaError):
    code = "decode_error"


class IoError(CadeltaError):
    code = "io_error"


class DimensionMismatch(CadeltaError):
    code = "dimension_mismatch"


class BandCountError(CadeltaError):
    code = "band_count_error"


class LabelOutOfTable(CadeltaError):
    code = "label_out_of_table"


class GeoMismatch(CadeltaError):
    code = "geo_mismatch"


class DuplicateId(CadeltaError):
    code = "duplicate_id"


class BadRatios(CadeltaError):
    code = "bad_ratios"


class MissingLayer(CadeltaError):
    code = "missing_layer"


class EmptyBatch(CadeltaError):
    code = "empty_batch"


class AddressOutOfRange(CadeltaError):
    code = "address_out_of_range"
