"""
report_pdf.py — PDF rendering of track and meeting-probability reports

Tables only; the CSV and JSON-lines outputs stay the primary data products.
"""

from datetime import datetime, timezone
from io import BytesIO

from reportlab.lib.pagesizes import A4
from reportlab.lib.units import inch
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table

from modules.analytics import TrackReport, format_mmss
from modules.report_styles import data_table_style, get_typography_styles


def _header(story, title, subtitle):
    styles = get_typography_styles()
    story.append(Paragraph(title, styles['DocumentTitle']))
    story.append(Paragraph(subtitle, styles['Caption']))
    story.append(Spacer(1, 0.25 * inch))


def _table(rows, col_widths=None):
    table = Table(rows, colWidths=col_widths, repeatRows=1)
    table.setStyle(data_table_style())
    return table


def revisit_rows(report: TrackReport, t_v_min: int) -> list[list[str]]:
    """SUM(locations) / AVG(duration) / AVG(visits) per r_v at one t_v_min."""
    rows = [['r_v (m)', 'SUM(locations)', 'AVG(duration)', 'AVG(visits)']]
    for r_v in report.r_v_values:
        cell = report.cell(r_v, t_v_min)
        rows.append([f"{r_v:g}", str(cell.n_locations), format_mmss(cell.avg_duration),
                     f"{cell.avg_visits:.2f}"])
    return rows


def accumulated_rows(report: TrackReport) -> list[list[str]]:
    """Accumulated visiting time (mm:ss), r_v down, t_v_min across."""
    t_values = report.t_v_min_values
    rows = [['r_v \\ t_v_min'] + [f"{t}s" for t in t_values]]
    for r_v in report.r_v_values:
        rows.append([f"{r_v:g}"] + [format_mmss(report.cell(r_v, t).accum_seconds) for t in t_values])
    return rows


def generate_track_pdf(report: TrackReport, track_name: str = "track") -> bytes:
    buffer = BytesIO()
    doc = SimpleDocTemplate(buffer, pagesize=A4, topMargin=0.75 * inch, bottomMargin=0.75 * inch)
    styles = get_typography_styles()
    story = []
    generated = datetime.now(timezone.utc).strftime('%Y-%m-%d %H:%M UTC')
    _header(story, "Track Presence Report", f"{track_name} · generated {generated}")

    story.append(Paragraph("Revisit statistics", styles['SectionHeader']))
    for t_v_min in report.t_v_min_values:
        story.append(Paragraph(f"Minimum visiting time {t_v_min} s", styles['BodyText']))
        story.append(_table(revisit_rows(report, t_v_min)))
        story.append(Spacer(1, 0.15 * inch))

    story.append(Paragraph("Accumulated visiting time", styles['SectionHeader']))
    story.append(_table(accumulated_rows(report)))
    story.append(Paragraph(
        "Parallel visits are counted once per location, so totals can exceed the track's wall-clock length.",
        styles['Caption'],
    ))

    doc.build(story)
    return buffer.getvalue()


def generate_meeting_pdf(curve, title: str = "Meeting probability") -> bytes:
    buffer = BytesIO()
    doc = SimpleDocTemplate(buffer, pagesize=A4, topMargin=0.75 * inch, bottomMargin=0.75 * inch)
    story = []
    _header(story, title, "Probability that x or more users requested the same page within one hour")
    rows = [['x', 'page-weighted', 'request-weighted']]
    rows += [[str(p.x), f"{p.page_weighted:.6f}", f"{p.request_weighted:.6f}"] for p in curve]
    story.append(_table(rows, col_widths=[1 * inch, 2 * inch, 2 * inch]))
    doc.build(story)
    return buffer.getvalue()
