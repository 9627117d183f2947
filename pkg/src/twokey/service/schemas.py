"""Request/response models. Field elements and keys travel as lowercase hex."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field, field_validator


def _check_hex(v: str) -> str:
    try:
        int(v, 16)
    except ValueError:
        raise ValueError(f"not a hex string: {v!r}") from None
    return v.lower()


class Health(BaseModel):
    status: str = "ok"
    role: str
    p_bits: int


class ParamsModel(BaseModel):
    p: str
    q: str
    p_bits: int


class ErrorModel(BaseModel):
    error: str
    detail: str = ""


class PayRequest(BaseModel):
    nft_id: int = Field(ge=1)
    payer: str = Field(min_length=1, pattern=r"^\S+$")
    amount: int = Field(ge=0)


class Receipt(BaseModel):
    tx_id: int
    nft_id: int
    payer: str
    amount: int
    consumed_x: bool
    consumed_y: bool


class VerifyRequest(BaseModel):
    nft_id: int
    payer: str
    side: str = Field(pattern="^[XY]$")


class VerifyResponse(BaseModel):
    ok: bool


class CountResponse(BaseModel):
    count: int


class BootstrapRequest(BaseModel):
    master_key: str

    _hex = field_validator("master_key")(_check_hex)


class ProvisionX(BaseModel):
    i: int = Field(ge=1)
    j: int = 1
    g: str
    blocks: list[str] = Field(min_length=1)
    original_length: int = Field(ge=1)

    @field_validator("g")
    @classmethod
    def _g(cls, v):
        return _check_hex(v)

    @field_validator("blocks")
    @classmethod
    def _blocks(cls, v):
        return [_check_hex(b) for b in v]


class ProvisionY(BaseModel):
    i: int = Field(ge=1)
    j: int = 1
    g: str
    block_count: int = Field(ge=1)

    @field_validator("g")
    @classmethod
    def _g(cls, v):
        return _check_hex(v)


class RekeyInitModel(BaseModel):
    j: int = Field(ge=2)
    ck_y: list[str] = Field(min_length=1)

    @field_validator("ck_y")
    @classmethod
    def _keys(cls, v):
        return [_check_hex(k) for k in v]


class EpochModel(BaseModel):
    i: int
    j: int


class RekeyRequestModel(BaseModel):
    j: int
    consumer: Optional[str] = None


class RekeyStarted(BaseModel):
    i: int
    j: Optional[int] = None


class FetchRequest(BaseModel):
    consumer: str = Field(min_length=1, pattern=r"^\S+$")


class ServeXModel(BaseModel):
    i: int
    j: int
    g: str
    blocks: list[str]
    inv_x: list[str]
    original_length: int


class ServeYModel(BaseModel):
    i: int
    j: int
    inv_y: list[str]


class XRecordInfo(BaseModel):
    i: int
    j: int
    g: str
    block_count: int
    original_length: int


class YRecordInfo(BaseModel):
    i: int
    j: int
    g: str
    block_count: int
    pending: Optional[int] = None


class AuditModel(BaseModel):
    party: str
    records: int
    violations: list[str]
