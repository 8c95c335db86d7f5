from .plant import (IDENTITY_PLANT, SurrogateParams, SurrogatePlant, canonical_plant,
                    naive_inverse, surrogate_apply)

__all__ = ["IDENTITY_PLANT", "SurrogateParams", "SurrogatePlant", "canonical_plant",
           "naive_inverse", "surrogate_apply"]
