from __future__ import annotations

import pytest

from malfeed import ActivityClass, Report, ReportStore
from malfeed.ingest import parse_ipv4


def make_report(ts: int, ip: str, activity: ActivityClass | None = None,
                url: str | None = None, source: str = "feed",
                asn: int | None = None, country: str | None = None,
                organization: str | None = None,
                av: tuple[int, int] | None = None) -> Report:
    return Report(
        timestamp=ts,
        ip=parse_ipv4(ip),
        url=url,
        activity=activity,
        source=source,
        av_positives=av[0] if av else None,
        av_total=av[1] if av else None,
        asn=asn,
        country=country,
        organization=organization,
    )


WEEK = 7 * 24 * 3600


@pytest.fixture
def hand_store() -> ReportStore:
    """Six reports, three IPs, two classes, spanning four weeks."""
    reports = [
        make_report(1 * WEEK + 10, "10.0.0.1", ActivityClass.MALWARE),
        make_report(1 * WEEK + 20, "10.0.0.1", ActivityClass.MALWARE),
        make_report(2 * WEEK + 5, "10.0.0.1", ActivityClass.PHISHING),
        make_report(1 * WEEK + 30, "10.0.0.2", ActivityClass.PHISHING),
        make_report(4 * WEEK + 1, "10.0.0.2", ActivityClass.PHISHING),
        make_report(3 * WEEK + 2, "10.1.0.9", ActivityClass.MALWARE),
    ]
    return ReportStore.from_reports(reports)
