import json
import sys
import time
from argparse import ArgumentParser
from enum import IntEnum
from pathlib import Path
from typing import Any

import numpy as np

from secureabc._version import version
from secureabc.cert_model import (
    DpToken,
    RevocationList,
    SignedCertificate,
    SsToken,
    VerifierCredential,
    decode_tlv,
    format_timestamp,
    read_qr_payload,
)
from secureabc.conf import CONFIG, CONFIG_PATH, SecureABCConfig
from secureabc.crypto_core import (
    EncKeyPair,
    KeyEndorsement,
    KeyRole,
    SigKeyPair,
    check_endorsement,
    find_key,
    key_blocks,
    keygen_enc,
    keygen_sign,
    read_key_file,
    write_key_file,
)
from secureabc.dp_tokens import DpAggregator, DpParams, Estimator, histogram_frame, issue_dp_token
from secureabc.errors import BadSignature, DuplicateToken, MalformedPayload, Reason, SecureABCError
from secureabc.holder_wallet import Wallet
from secureabc.issuer import Contact, Issuer, RevocationReason
from secureabc.logs import configure_logging, verbosity_level
from secureabc.sim_harness import ErrorCurveConfig, ScenarioConfig, run_error_curve, run_scenario, tradeoff_table
from secureabc.ss_tokens import (
    ForwardChannel,
    HelperAggregator,
    SsParams,
    VerifierAggregator,
    aggregate,
    issue_ss_token,
)
from secureabc.trust_root import TrustRoot, issue_verifier_credential_by_issuer
from secureabc.verifier import Verifier

DAY = 24 * 60 * 60
VERIFIER_SS_STATE = "ss-state.json"
HELPER_SS_STATE = "ss-state.json"


class ExitCode(IntEnum):
    OK = 0
    USAGE = 1
    BAD_SIGNATURE = 2
    REVOKED = 3
    EXPIRED = 4
    MALFORMED = 5
    CAPACITY = 6
    DUPLICATE = 7
    DECRYPTION = 8
    VERIFIER_REVOKED = 9
    UNKNOWN_RECORD = 10
    STALE = 11
    PROTOCOL_VIOLATION = 12
    PERIOD_MISMATCH = 13


REASON_EXIT_CODES = {
    Reason.MALFORMED_PAYLOAD: ExitCode.MALFORMED,
    Reason.ENCODING_ERROR: ExitCode.MALFORMED,
    Reason.MALFORMED_KEY: ExitCode.MALFORMED,
    Reason.CAPACITY_EXCEEDED: ExitCode.CAPACITY,
    Reason.BAD_SIGNATURE: ExitCode.BAD_SIGNATURE,
    Reason.UNKNOWN_ISSUER: ExitCode.BAD_SIGNATURE,
    Reason.REVOKED: ExitCode.REVOKED,
    Reason.EXPIRED: ExitCode.EXPIRED,
    Reason.NOT_YET_VALID: ExitCode.EXPIRED,
    Reason.DECRYPTION_FAILURE: ExitCode.DECRYPTION,
    Reason.DUPLICATE_ISSUE: ExitCode.DUPLICATE,
    Reason.DUPLICATE_TID: ExitCode.DUPLICATE,
    Reason.DUPLICATE_TOKEN: ExitCode.DUPLICATE,
    Reason.UNKNOWN_CID: ExitCode.UNKNOWN_RECORD,
    Reason.UNKNOWN_TID: ExitCode.UNKNOWN_RECORD,
    Reason.STALE_LIST: ExitCode.STALE,
    Reason.STALE_CACHE: ExitCode.STALE,
    Reason.PROTOCOL_VIOLATION: ExitCode.PROTOCOL_VIOLATION,
    Reason.VERIFIER_REVOKED: ExitCode.VERIFIER_REVOKED,
    Reason.PERIOD_MISMATCH: ExitCode.PERIOD_MISMATCH,
    Reason.INVALID_PARAMETER: ExitCode.USAGE,
}


class _Parser(ArgumentParser):
    """ArgumentParser whose usage errors exit with ``ExitCode.USAGE``."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(ExitCode.USAGE, f"{self.prog}: error: {message}\n")


def sanitize_args(args: dict[str, Any], *extra: str) -> dict[str, Any]:
    """Remove command, subcommand, global flags, ``extra`` keys and None values from a args dictionary."""
    for key in ("command", "subcommand", "json", "verbose", "seed", "now", *extra):
        args.pop(key, None)
    return {k: v for k, v in args.items() if v is not None}


def _now(args) -> int:
    return args.now if args.now is not None else int(time.time())


def _seeded(args) -> np.random.Generator | None:
    return np.random.default_rng(args.seed) if args.seed is not None else None


def _emit(args, payload: dict[str, Any], text: str) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True) if getattr(args, "json", False) else text)


def _fail(args, reason: Reason, message: str) -> int:
    if getattr(args, "json", False):
        print(json.dumps({"status": "error", "reason": reason.value, "message": message}, sort_keys=True))
    print(message, file=sys.stderr)
    return REASON_EXIT_CODES[reason]


def _public_key(path: Path | str) -> bytes:
    return find_key(read_key_file(path), private=False)


def _read_record(path: Path | str, kind: type):
    record = decode_tlv(Path(path).read_bytes())
    if not isinstance(record, kind):
        raise MalformedPayload(f"{path} holds a {type(record).__name__}, expected {kind.__name__}", 0)
    return record


def _trusted_issuer_key(args) -> bytes:
    """pk_H from an issuer endorsement, checked against the root key."""
    endorsement = _read_record(args.issuer, KeyEndorsement)
    if endorsement.role != KeyRole.ISSUER or not check_endorsement(_public_key(args.root), endorsement):
        raise BadSignature(f"{args.issuer} is not a root endorsement of an issuer key")
    return endorsement.subject_key


def _load_sig_keys(path: Path | str) -> SigKeyPair:
    blocks = read_key_file(path)
    return SigKeyPair(public_key=find_key(blocks, private=False), private_key=find_key(blocks, private=True))


def _load_enc_keys(path: Path | str) -> EncKeyPair:
    blocks = read_key_file(path)
    return EncKeyPair(public_key=find_key(blocks, private=False), private_key=find_key(blocks, private=True))


def _write_keys(directory: Path | str, name: str, role: KeyRole, keys: SigKeyPair | EncKeyPair) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_key_file(directory / f"{name}.key", key_blocks(role, keys))
    write_key_file(directory / f"{name}.pub", key_blocks(role, keys, private=False))


def _open_issuer(directory: Path | str) -> Issuer:
    directory = Path(directory)
    return Issuer(
        _load_sig_keys(directory / "issuer.key"),
        journal_path=directory / "journal.log",
        outbox_path=directory / "outbox.jsonl",
        validity_days=CONFIG.Settings.validity_days,
    )


def _wallet_options() -> dict[str, Any]:
    settings = CONFIG.Settings
    return {
        "accept_issuer_signed": settings.accept_issuer_signed_verifiers,
        "max_age": settings.rev_v_max_age,
        "session_ttl": settings.session_ttl,
    }


def _clock_skew(args) -> int:
    return args.clock_skew if args.clock_skew is not None else CONFIG.Settings.clock_skew


def _ss_params(args) -> SsParams:
    return SsParams(prime_id=args.prime_id if args.prime_id is not None else CONFIG.Settings.ss_prime_id)


def _dp_params(args) -> DpParams:
    settings = CONFIG.Settings
    return DpParams(
        k=args.k if args.k is not None else settings.dp_k,
        epsilon=args.epsilon if args.epsilon is not None else settings.dp_epsilon,
    )


def _root_command(args) -> int:
    if args.subcommand == "init":
        root = TrustRoot.generate(_seeded(args))
        root.save(args.dir)
        write_key_file(Path(args.dir) / "root.pub", key_blocks(KeyRole.ROOT, root.keys, private=False))
        _emit(args, {"key_id": root.keys.key_id.hex()}, f"Root key {root.keys.key_id.hex()} created in {args.dir}.")
    elif args.subcommand == "endorse":
        endorsement = TrustRoot.load(args.dir).endorse(_public_key(args.key), KeyRole[args.role.upper()], _now(args))
        Path(args.out).write_bytes(endorsement.to_tlv())
        _emit(
            args,
            {"key_id": endorsement.subject_key_id.hex(), "role": args.role},
            f"Endorsed {args.role} key {endorsement.subject_key_id.hex()}, written to {args.out}.",
        )
    elif args.subcommand == "revoke-verifier":
        root = TrustRoot.load(args.dir)
        if args.key_id:
            key_id = root.revoke_verifier(bytes.fromhex(args.key_id))
        else:
            key_id = root.revoke_verifier(_read_record(args.credential, VerifierCredential).pk_v)
        root.save(args.dir)
        _emit(args, {"key_id": key_id.hex()}, f"Verifier key {key_id.hex()} revoked.")
    elif args.subcommand == "publish-revV":
        rev_v = TrustRoot.load(args.dir).publish_verifier_revocation_list(_now(args))
        Path(args.out).write_bytes(rev_v.to_tlv())
        entries = len(rev_v.entries)
        _emit(args, {"entries": entries}, f"Verifier revocation list ({entries} entries) written to {args.out}.")
    return ExitCode.OK


def _issuer_command(args) -> int:
    if args.subcommand == "init":
        keys = keygen_sign(_seeded(args))
        _write_keys(args.dir, "issuer", KeyRole.ISSUER, keys)
        _emit(args, {"key_id": keys.key_id.hex()}, f"Issuer key {keys.key_id.hex()} created in {args.dir}.")
        return ExitCode.OK
    issuer = _open_issuer(args.dir)
    if args.subcommand == "issue":
        certificate = issuer.issue_certificate(
            person_id=args.person,
            tid=args.tid,
            name=args.name,
            photo=Path(args.photo).read_bytes(),
            contact=Contact.parse(args.contact),
            validity_days=args.validity_days,
            now=_now(args),
            rng=_seeded(args),
        )
        Path(args.out).write_bytes(certificate.to_tlv())
        body = certificate.body
        _emit(
            args,
            {"cid": body.cid.hex(), "valid_from": body.valid_from, "valid_until": body.valid_until},
            f"Certificate {body.cid.hex()} valid until {format_timestamp(body.valid_until)} written to {args.out}.",
        )
    elif args.subcommand == "revoke":
        issuer.revoke_by_cid(bytes.fromhex(args.cid), RevocationReason[args.reason.upper()], _now(args))
        _emit(args, {"cid": args.cid}, f"Certificate {args.cid} revoked.")
    elif args.subcommand == "revoke-tid":
        cid = issuer.revoke_by_tid(args.tid, now=_now(args))
        _emit(args, {"cid": cid.hex(), "tid": args.tid}, f"Certificate {cid.hex()} for test {args.tid} revoked.")
    elif args.subcommand == "publish-rev":
        rev = issuer.publish_revocation_list(_now(args))
        Path(args.out).write_bytes(rev.to_tlv())
        _emit(args, {"entries": len(rev.entries)}, f"Revocation list ({len(rev.entries)} entries) written.")
    elif args.subcommand == "sign-verifier":
        credential = issue_verifier_credential_by_issuer(issuer.keys, _public_key(args.key), _now(args))
        Path(args.out).write_bytes(credential.to_tlv())
        _emit(args, {"key_id": credential.subject_key_id.hex()}, f"Verifier credential written to {args.out}.")
    return ExitCode.OK


def _holder_command(args) -> int:
    if args.subcommand == "init":
        wallet = Wallet(
            _read_record(args.certificate, SignedCertificate),
            _public_key(args.root),
            issuer_endorsements=[_read_record(path, KeyEndorsement) for path in args.issuer or []],
            **_wallet_options(),
        )
        wallet.save(args.wallet)
        _emit(args, {"cid": wallet.certificate.body.cid.hex()}, f"Wallet written to {args.wallet}.")
        return ExitCode.OK
    wallet = Wallet.load(args.wallet, **_wallet_options())
    if args.subcommand == "refresh-revV":
        rev_v = _read_record(args.list, RevocationList)
        wallet.refresh_verifier_revocations(rev_v, _now(args))
        wallet.save(args.wallet)
        _emit(args, {"entries": len(rev_v.entries)}, f"Cached verifier revocation list ({len(rev_v.entries)} entries).")
    elif args.subcommand == "check-verifier":
        check = wallet.check_verifier(_read_record(args.credential, VerifierCredential), _now(args))
        if not check.accepted:
            return _fail(args, check.reason, f"abort: {check.reason.value}")
        _emit(args, {"status": "accept"}, "accept")
    elif args.subcommand == "respond":
        ciphertext = wallet.respond(_read_record(args.credential, VerifierCredential), _now(args), _seeded(args))
        Path(args.out).write_bytes(ciphertext)
        size = len(ciphertext)
        _emit(args, {"bytes": size}, f"Encrypted certificate ({size} bytes) written to {args.out}.")
    elif args.subcommand == "export-qr":
        payload = wallet.export_qr(args.text)
        Path(args.out).write_bytes(payload)
        _emit(args, {"bytes": len(payload)}, f"QR payload ({len(payload)} bytes) written to {args.out}.")
    return ExitCode.OK


def _verify_command(args) -> int:
    enc_keys = _load_enc_keys(Path(args.verifier_dir) / "verifier.key") if args.verifier_dir else None
    verifier = Verifier(_public_key(args.root), enc_keys, clock_skew=_clock_skew(args))
    for path in args.issuer:
        verifier.add_issuer(_read_record(path, KeyEndorsement))
    for path in args.revlist:
        verifier.refresh_revocations(_read_record(path, RevocationList))
    payload = read_qr_payload(Path(args.payload).read_bytes(), args.text)
    if args.app:
        result = verifier.verify_app(payload, _now(args))
    else:
        result = verifier.verify_paper(payload, _now(args))
    if not result.accepted:
        return _fail(args, result.reason, f"reject: {result.reason.value}")
    if args.photo_out:
        Path(args.photo_out).write_bytes(result.photo)
    _emit(
        args,
        {"status": "accept", "name": result.name, "cid": result.cid.hex(), "valid_until": result.valid_until},
        f"accept: {result.name}, certificate {result.cid.hex()}, valid until {format_timestamp(result.valid_until)}",
    )
    return ExitCode.OK


def _verifier_command(args) -> int:
    if args.subcommand == "init":
        keys = keygen_enc(_seeded(args))
        _write_keys(args.dir, "verifier", KeyRole.VERIFIER, keys)
        _emit(args, {"key_id": keys.key_id.hex()}, f"Verifier key {keys.key_id.hex()} created in {args.dir}.")
    elif args.subcommand == "ingest-ss":
        state = Path(args.dir) / VERIFIER_SS_STATE
        pk_h = _trusted_issuer_key(args)
        options = {"period": CONFIG.Settings.reporting_period, "clock_skew": _clock_skew(args)}
        if state.exists():
            aggregator = VerifierAggregator.load(state, pk_h, _ss_params(args), **options)
        else:
            aggregator = VerifierAggregator(pk_h, _ss_params(args), **options)
        message = aggregator.ingest(_read_record(args.token, SsToken), _now(args))
        ForwardChannel(args.channel).send(message)
        aggregator.save(state)
        _emit(args, {"period": message.period_name}, f"Share absorbed and forwarded for {message.period_name}.")
    return ExitCode.OK


def _helper_command(args) -> int:
    if args.subcommand == "init":
        keys = keygen_enc(_seeded(args))
        _write_keys(args.dir, "helper", KeyRole.HELPER, keys)
        _emit(args, {"key_id": keys.key_id.hex()}, f"Helper key {keys.key_id.hex()} created in {args.dir}.")
    elif args.subcommand == "ingest-ss":
        state = Path(args.dir) / HELPER_SS_STATE
        pk_h = _trusted_issuer_key(args)
        sk_w = _load_enc_keys(Path(args.dir) / "helper.key").private_key
        if state.exists():
            aggregator = HelperAggregator.load(state, pk_h, sk_w, _ss_params(args))
        else:
            aggregator = HelperAggregator(pk_h, sk_w, _ss_params(args))
        absorbed = skipped = 0
        for message in ForwardChannel(args.channel).receive(args.period):
            try:
                aggregator.ingest(message)
                absorbed += 1
            except DuplicateToken:
                skipped += 1
        aggregator.save(state)
        _emit(
            args,
            {"period": args.period, "absorbed": absorbed, "skipped": skipped},
            f"Absorbed {absorbed} shares for {args.period} ({skipped} already counted).",
        )
    return ExitCode.OK


def _token_command(args) -> int:
    if args.subcommand in ("issue-dp", "issue-ss"):
        issuer = _open_issuer(args.issuer_dir)
        now = _now(args)
        validity_days = args.validity_days or CONFIG.Settings.validity_days
        rng = np.random.default_rng(args.seed)
        if args.subcommand == "issue-dp":
            token, _ = issue_dp_token(
                issuer.keys.private_key, args.risk, _dp_params(args), now, now + validity_days * DAY, rng
            )
        else:
            token, _ = issue_ss_token(
                issuer.keys.private_key,
                _public_key(args.helper_key),
                args.risk,
                _ss_params(args),
                now,
                now + validity_days * DAY,
                rng,
            )
        Path(args.out).write_bytes(token.to_tlv())
        _emit(args, {"token_id": token.token_id.hex()}, f"Token written to {args.out}.")
    elif args.subcommand == "verify-dp":
        pk_h = _trusted_issuer_key(args)
        period = CONFIG.Settings.reporting_period
        token = _read_record(args.token, DpToken)
        if Path(args.state).exists():
            aggregator = DpAggregator.load(args.state, pk_h, period, _clock_skew(args))
        else:
            aggregator = DpAggregator(pk_h, DpParams(token.k, token.epsilon), period, _clock_skew(args))
        level = aggregator.submit(token, _now(args))
        aggregator.save(args.state)
        _emit(args, {"i_dp": level}, f"Token counted with randomized level {level}.")
    elif args.subcommand == "report-dp":
        aggregator = DpAggregator.load(args.state, b"", CONFIG.Settings.reporting_period)
        params = aggregator.params
        mode = Estimator.PAPER_EQ1 if args.mode == "paper" else Estimator(args.mode or CONFIG.Settings.estimator)
        frame = histogram_frame(aggregator.histograms(), params, mode)
        if args.csv:
            frame.to_csv(args.csv, index=False)
        if args.json:
            print(frame.to_json(orient="records"))
        else:
            print(frame.to_markdown(index=False))
    return ExitCode.OK


def _aggregate_command(args) -> int:
    params = _ss_params(args)
    verifier_state = VerifierAggregator.load(args.verifier_state, b"", params)
    helper_state = HelperAggregator.load(args.helper_state, b"", b"", params)
    j_v = verifier_state.accumulator(args.period)
    j_w = helper_state.accumulator(args.period)
    total = aggregate(j_v, j_w)
    _emit(
        args,
        {"period": args.period, "total": total, "verifier_count": j_v.count, "helper_count": j_w.count},
        f"Total risk for {args.period}: {total} ({j_v.count} verifier shares, {j_w.count} helper shares)",
    )
    return ExitCode.OK


def _sim_command(args) -> int:
    if args.subcommand == "error-curve":
        config = ErrorCurveConfig(
            epsilons=args.epsilons,
            k=args.k,
            n_values=args.n_values,
            trials=args.trials,
            true_distribution=args.true_distribution,
            seed=args.seed if args.seed is not None else 0,
            workers=args.workers,
        )
        frame = run_error_curve(config)
        if args.csv:
            frame.to_csv(args.csv, index=False)
        print(frame.to_json(orient="records") if args.json else frame.to_markdown(index=False))
    elif args.subcommand == "scenario":
        config = ScenarioConfig(**sanitize_args(dict(vars(args)), "scenario_json"), seed=args.seed or 0)
        report = run_scenario(config)
        if args.scenario_json and args.scenario_json != "-":
            Path(args.scenario_json).write_text(report.to_json(indent=2))
        if args.scenario_json == "-":
            print(report.to_json(indent=2))
        else:
            print(
                f"{report.authentications} authentications: {report.accepts} accepted, "
                f"{report.wrongly_accepted} wrongly accepted, rejects {report.rejects}; "
                f"secret-shared total {report.ss_total} (truth {report.ss_truth})"
            )
    elif args.subcommand == "tradeoffs":
        config = ScenarioConfig(**sanitize_args(dict(vars(args)), "scenario_json"), seed=args.seed or 0)
        table = tradeoff_table(run_scenario(config))
        print(table.to_json(orient="records") if args.json else table.to_markdown(index=False))
    return ExitCode.OK


def _config_command(args) -> int:
    path = Path(args.path) if args.path else CONFIG_PATH
    if args.subcommand == "init":
        if path.exists() and not args.force:
            print(f"Configuration file already exists at: {path}", file=sys.stderr)
            return ExitCode.USAGE
        SecureABCConfig().save(path)
        print(f"Configuration file created at: {path}")
    elif args.subcommand == "show":
        config = SecureABCConfig.load(path) if path.exists() else SecureABCConfig()
        if args.json:
            print(config.to_json(indent=2))
        else:
            print(f"# {path}")
            for key, value in config.Settings.to_dict().items():
                print(f"{key} = {value}")
    return ExitCode.OK


def _add_scenario_arguments(parser: ArgumentParser) -> None:
    parser.add_argument("--population", type=int, default=200, help="People who may be tested")
    parser.add_argument("--issue-rate", type=float, default=20.0, help="Mean issues per day")
    parser.add_argument("--auth-rate", type=float, default=50.0, help="Mean authentications per day")
    parser.add_argument("--revoke-rate", type=float, default=2.0, help="Mean revocations per day")
    parser.add_argument("--days", type=int, default=7, help="Simulated days")
    parser.add_argument(
        "--refresh-policy", type=str, default="daily", choices=["immediate", "daily"], help="When rev is refreshed"
    )
    parser.add_argument("--app-share", type=float, default=0.5, help="Fraction of app-based authentications")


def build_parser() -> ArgumentParser:
    """Build the argument parser for the SecureABC CLI."""
    # flags every leaf command accepts
    common = ArgumentParser(add_help=False)
    common.add_argument("--verbose", "-V", action="count", default=0, help="Log INFO (-V) or DEBUG (-VV)")
    common.add_argument("--seed", type=int, default=None, help="Seed for every random choice")
    common.add_argument("--now", type=int, default=None, help="Current time as Unix seconds")
    output = ArgumentParser(add_help=False, parents=[common])
    output.add_argument("--json", action="store_true", help="Machine-readable output")

    parser = _Parser(description=f"SecureABC CLI, Version {version}")
    parser.add_argument("--version", "-v", action="version", version=f"SecureABC CLI, Version {version}")
    subparsers = parser.add_subparsers(dest="command", help="Commands", parser_class=_Parser)

    """root command"""
    root_command = subparsers.add_parser("root", help="Root of trust")
    root_subcommands = root_command.add_subparsers(dest="subcommand", help="Subcommands", parser_class=_Parser)
    root_init = root_subcommands.add_parser("init", help="Generate the root key", parents=[output])
    root_init.add_argument("--dir", type=str, required=True, help="Root directory")
    root_endorse = root_subcommands.add_parser("endorse", help="Endorse a provider key", parents=[output])
    root_endorse.add_argument("--dir", type=str, required=True, help="Root directory")
    root_endorse.add_argument("--key", type=str, required=True, help="Public key file to endorse")
    root_endorse.add_argument("--role", type=str, required=True, choices=["issuer", "verifier", "helper"])
    root_endorse.add_argument("--out", type=str, required=True, help="Endorsement output file")
    root_revoke = root_subcommands.add_parser("revoke-verifier", help="Revoke a verifier key", parents=[output])
    root_revoke.add_argument("--dir", type=str, required=True, help="Root directory")
    root_revoke_target = root_revoke.add_mutually_exclusive_group(required=True)
    root_revoke_target.add_argument("--credential", type=str, help="The verifier credential file")
    root_revoke_target.add_argument("--key-id", type=str, help="Hex fingerprint of the verifier key")
    root_publish = root_subcommands.add_parser(
        "publish-revV", help="Sign the verifier revocation list", parents=[output]
    )
    root_publish.add_argument("--dir", type=str, required=True, help="Root directory")
    root_publish.add_argument("--out", type=str, required=True, help="List output file")

    """issuer command"""
    issuer_command = subparsers.add_parser("issuer", help="Certificate issuance and revocation")
    issuer_subcommands = issuer_command.add_subparsers(dest="subcommand", help="Subcommands", parser_class=_Parser)
    issuer_init = issuer_subcommands.add_parser("init", help="Generate the issuer key", parents=[output])
    issuer_init.add_argument("--dir", type=str, required=True, help="Issuer directory")
    issuer_issue = issuer_subcommands.add_parser("issue", help="Issue a certificate", parents=[output])
    issuer_issue.add_argument("--dir", type=str, required=True, help="Issuer directory")
    issuer_issue.add_argument("--person", type=str, required=True, help="Medical-record key of the person")
    issuer_issue.add_argument("--tid", type=str, required=True, help="Test identity number")
    issuer_issue.add_argument("--name", type=str, required=True, help="Name printed on the certificate")
    issuer_issue.add_argument("--photo", type=str, required=True, help="JPEG photo file")
    issuer_issue.add_argument("--contact", type=str, required=True, help="channel:address, e.g. sms:+447700900123")
    issuer_issue.add_argument("--validity-days", type=int, default=None, help="Certificate lifetime")
    issuer_issue.add_argument("--out", type=str, required=True, help="Certificate output file")
    issuer_revoke = issuer_subcommands.add_parser("revoke", help="Revoke a certificate by CID", parents=[output])
    issuer_revoke.add_argument("--dir", type=str, required=True, help="Issuer directory")
    issuer_revoke.add_argument("--cid", type=str, required=True, help="Hex certificate id")
    issuer_revoke.add_argument("--reason", type=str, default="loss", choices=["loss", "error", "misuse"])
    issuer_revoke_tid = issuer_subcommands.add_parser("revoke-tid", help="Revoke by test number", parents=[output])
    issuer_revoke_tid.add_argument("--dir", type=str, required=True, help="Issuer directory")
    issuer_revoke_tid.add_argument("--tid", type=str, required=True, help="Test identity number")
    issuer_publish = issuer_subcommands.add_parser("publish-rev", help="Sign the revocation list", parents=[output])
    issuer_publish.add_argument("--dir", type=str, required=True, help="Issuer directory")
    issuer_publish.add_argument("--out", type=str, required=True, help="List output file")
    issuer_sign = issuer_subcommands.add_parser(
        "sign-verifier", help="Issuer-signed verifier credential", parents=[output]
    )
    issuer_sign.add_argument("--dir", type=str, required=True, help="Issuer directory")
    issuer_sign.add_argument("--key", type=str, required=True, help="Verifier public key file")
    issuer_sign.add_argument("--out", type=str, required=True, help="Credential output file")

    """holder command"""
    holder_command = subparsers.add_parser("holder", help="Holder wallet")
    holder_subcommands = holder_command.add_subparsers(dest="subcommand", help="Subcommands", parser_class=_Parser)
    holder_init = holder_subcommands.add_parser("init", help="Create a wallet", parents=[output])
    holder_init.add_argument("--wallet", type=str, required=True, help="Wallet file")
    holder_init.add_argument("--certificate", type=str, required=True, help="Certificate file")
    holder_init.add_argument("--root", type=str, required=True, help="Root public key file")
    holder_init.add_argument("--issuer", type=str, nargs="+", default=None, help="Issuer endorsement files")
    holder_refresh = holder_subcommands.add_parser(
        "refresh-revV", help="Cache a verifier revocation list", parents=[output]
    )
    holder_refresh.add_argument("--wallet", type=str, required=True, help="Wallet file")
    holder_refresh.add_argument("--list", type=str, required=True, help="Verifier revocation list file")
    holder_check = holder_subcommands.add_parser("check-verifier", help="Check a verifier", parents=[output])
    holder_check.add_argument("--wallet", type=str, required=True, help="Wallet file")
    holder_check.add_argument("--credential", type=str, required=True, help="Verifier credential file")
    holder_respond = holder_subcommands.add_parser("respond", help="Check a verifier and respond", parents=[output])
    holder_respond.add_argument("--wallet", type=str, required=True, help="Wallet file")
    holder_respond.add_argument("--credential", type=str, required=True, help="Verifier credential file")
    holder_respond.add_argument("--out", type=str, required=True, help="Ciphertext output file")
    holder_export = holder_subcommands.add_parser("export-qr", help="Export the paper QR payload", parents=[output])
    holder_export.add_argument("--wallet", type=str, required=True, help="Wallet file")
    holder_export.add_argument("--out", type=str, required=True, help="Payload output file")
    holder_export.add_argument("--text", action="store_true", help="Base64 payload for text-only readers")

    """verify command"""
    verify_command = subparsers.add_parser("verify", help="Verify a presented certificate", parents=[output])
    verify_command.add_argument("--payload", type=str, required=True, help="Scanned payload file")
    verify_command.add_argument(
        "--revlist", type=str, nargs="+", required=True, help="Certificate revocation list file of each issuer"
    )
    verify_command.add_argument("--root", type=str, required=True, help="Root public key file")
    verify_command.add_argument("--issuer", type=str, nargs="+", required=True, help="Issuer endorsement files")
    verify_command.add_argument("--photo-out", type=str, default=None, help="Write the holder's photo here")
    verify_command.add_argument("--text", action="store_true", help="Payload is base64")
    verify_command.add_argument("--app", action="store_true", help="Payload is an app-auth ciphertext")
    verify_command.add_argument("--verifier-dir", type=str, default=None, help="Verifier directory (app mode)")
    verify_command.add_argument("--clock-skew", type=int, default=None, choices=range(0, 301), metavar="[0-300]")

    """verifier command"""
    verifier_command = subparsers.add_parser("verifier", help="Verifier keys and token shares")
    verifier_subcommands = verifier_command.add_subparsers(dest="subcommand", help="Subcommands", parser_class=_Parser)
    verifier_init = verifier_subcommands.add_parser("init", help="Generate the verifier key", parents=[output])
    verifier_init.add_argument("--dir", type=str, required=True, help="Verifier directory")
    verifier_ingest = verifier_subcommands.add_parser(
        "ingest-ss", help="Absorb a secret-shared token", parents=[output]
    )
    verifier_ingest.add_argument("--dir", type=str, required=True, help="Verifier directory")
    verifier_ingest.add_argument("--token", type=str, required=True, help="Token file")
    verifier_ingest.add_argument("--channel", type=str, required=True, help="Forward channel directory")
    verifier_ingest.add_argument("--root", type=str, required=True, help="Root public key file")
    verifier_ingest.add_argument("--issuer", type=str, required=True, help="Issuer endorsement file")
    verifier_ingest.add_argument("--prime-id", type=int, default=None, choices=[1, 2, 3])
    verifier_ingest.add_argument("--clock-skew", type=int, default=None, choices=range(0, 301), metavar="[0-300]")

    """helper command"""
    helper_command = subparsers.add_parser("helper", help="Helper share aggregation")
    helper_subcommands = helper_command.add_subparsers(dest="subcommand", help="Subcommands", parser_class=_Parser)
    helper_init = helper_subcommands.add_parser("init", help="Generate the helper key", parents=[output])
    helper_init.add_argument("--dir", type=str, required=True, help="Helper directory")
    helper_ingest = helper_subcommands.add_parser("ingest-ss", help="Absorb relayed shares", parents=[output])
    helper_ingest.add_argument("--dir", type=str, required=True, help="Helper directory")
    helper_ingest.add_argument("--channel", type=str, required=True, help="Forward channel directory")
    helper_ingest.add_argument("--period", type=str, required=True, help="Reporting period")
    helper_ingest.add_argument("--root", type=str, required=True, help="Root public key file")
    helper_ingest.add_argument("--issuer", type=str, required=True, help="Issuer endorsement file")
    helper_ingest.add_argument("--prime-id", type=int, default=None, choices=[1, 2, 3])

    """token command"""
    token_command = subparsers.add_parser("token", help="Health tokens")
    token_subcommands = token_command.add_subparsers(dest="subcommand", help="Subcommands", parser_class=_Parser)
    token_issue_dp = token_subcommands.add_parser("issue-dp", help="Issue a randomized token", parents=[output])
    token_issue_ss = token_subcommands.add_parser("issue-ss", help="Issue a secret-shared token", parents=[output])
    for token_issue in (token_issue_dp, token_issue_ss):
        token_issue.add_argument("--issuer-dir", type=str, required=True, help="Issuer directory")
        token_issue.add_argument("--risk", type=int, required=True, help="True risk level")
        token_issue.add_argument("--validity-days", type=int, default=None, help="Token lifetime")
        token_issue.add_argument("--out", type=str, required=True, help="Token output file")
    token_issue_dp.add_argument("--k", type=int, default=None, help="Number of risk levels")
    token_issue_dp.add_argument("--epsilon", type=float, default=None, help="Privacy budget")
    token_issue_ss.add_argument("--helper-key", type=str, required=True, help="Helper public key file")
    token_issue_ss.add_argument("--prime-id", type=int, default=None, choices=[1, 2, 3])
    token_verify_dp = token_subcommands.add_parser("verify-dp", help="Count a randomized token", parents=[output])
    token_verify_dp.add_argument("--token", type=str, required=True, help="Token file")
    token_verify_dp.add_argument("--state", type=str, required=True, help="Aggregator state file")
    token_verify_dp.add_argument("--root", type=str, required=True, help="Root public key file")
    token_verify_dp.add_argument("--issuer", type=str, required=True, help="Issuer endorsement file")
    token_verify_dp.add_argument("--clock-skew", type=int, default=None, choices=range(0, 301), metavar="[0-300]")
    token_report_dp = token_subcommands.add_parser("report-dp", help="Estimate risk frequencies", parents=[output])
    token_report_dp.add_argument("--state", type=str, required=True, help="Aggregator state file")
    token_report_dp.add_argument("--mode", type=str, default=None, choices=["paper", "unbiased"])
    token_report_dp.add_argument("--csv", type=str, default=None, help="Write the histogram as CSV")

    """aggregate-ss command"""
    aggregate_command = subparsers.add_parser("aggregate-ss", help="Combine both accumulators", parents=[output])
    aggregate_command.add_argument("--verifier-state", type=str, required=True, help="Verifier state file")
    aggregate_command.add_argument("--helper-state", type=str, required=True, help="Helper state file")
    aggregate_command.add_argument("--period", type=str, required=True, help="Reporting period")
    aggregate_command.add_argument("--prime-id", type=int, default=None, choices=[1, 2, 3])

    """sim command"""
    sim_command = subparsers.add_parser("sim", help="Simulations")
    sim_subcommands = sim_command.add_subparsers(dest="subcommand", help="Subcommands", parser_class=_Parser)
    sim_curve = sim_subcommands.add_parser("error-curve", help="Estimator error sweep", parents=[output])
    sim_curve.add_argument("--epsilons", type=float, nargs="+", default=ErrorCurveConfig().epsilons)
    sim_curve.add_argument("--k", type=int, default=2, help="Number of risk levels")
    sim_curve.add_argument("--n-values", type=int, nargs="+", default=[100, 1_000, 10_000])
    sim_curve.add_argument("--trials", type=int, default=200, help="Trials per point")
    sim_curve.add_argument("--true-distribution", type=float, nargs="+", default=None)
    sim_curve.add_argument("--workers", type=int, default=1, help="Threads running trials")
    sim_curve.add_argument("--csv", type=str, default=None, help="Write the curve as CSV")
    sim_scenario = sim_subcommands.add_parser("scenario", help="End-to-end protocol run", parents=[common])
    _add_scenario_arguments(sim_scenario)
    sim_scenario.add_argument(
        "--json", dest="scenario_json", nargs="?", const="-", default=None, help="Write the report as JSON"
    )
    sim_tradeoffs = sim_subcommands.add_parser("tradeoffs", help="Protocol trade-off table", parents=[output])
    _add_scenario_arguments(sim_tradeoffs)

    """config command"""
    config_command = subparsers.add_parser("config", help="Configuration")
    config_subcommands = config_command.add_subparsers(dest="subcommand", help="Subcommands", parser_class=_Parser)
    config_init = config_subcommands.add_parser("init", help="Write a default configuration file", parents=[output])
    config_init.add_argument("--path", type=str, default=None, help="Configuration file path")
    config_init.add_argument("--force", action="store_true", help="Overwrite an existing file")
    config_show = config_subcommands.add_parser("show", help="Print the configuration", parents=[output])
    config_show.add_argument("--path", type=str, default=None, help="Configuration file path")

    return parser


COMMANDS = {
    "root": _root_command,
    "issuer": _issuer_command,
    "holder": _holder_command,
    "verify": _verify_command,
    "verifier": _verifier_command,
    "helper": _helper_command,
    "token": _token_command,
    "aggregate-ss": _aggregate_command,
    "sim": _sim_command,
    "config": _config_command,
}


def secureabc_cli(argv: list[str] | None = None) -> int:
    """CLI function for SecureABC

    Parameters
    ----------
    argv : list[str] | None
        Arguments, by default ``sys.argv[1:]``.

    Returns
    -------
    int
        An :class:`ExitCode`.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None or (args.command in COMMANDS and getattr(args, "subcommand", "") is None):
        parser.print_usage(sys.stderr)
        return ExitCode.USAGE

    configure_logging(verbosity_level(getattr(args, "verbose", 0), CONFIG.Settings.log_level))
    try:
        return int(COMMANDS[args.command](args))
    except SecureABCError as exc:
        return _fail(args, exc.reason, str(exc))
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ExitCode.USAGE


def main():
    sys.exit(secureabc_cli())
