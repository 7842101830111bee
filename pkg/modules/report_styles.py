"""
report_styles.py — typography and table grammar for presenced PDF reports
"""

from reportlab.lib import colors
from reportlab.lib.enums import TA_LEFT
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.platypus import TableStyle

PALETTE = {
    'ink': colors.HexColor('#1b3a4b'),
    'muted': colors.HexColor('#5c6b73'),
    'rule': colors.HexColor('#c9d6df'),
    'band': colors.HexColor('#eef4f7'),
}

# name → (sample-sheet parent, overrides)
_PARAGRAPHS = {
    'DocumentTitle': ('Title', {'fontSize': 20, 'alignment': TA_LEFT, 'spaceAfter': 6}),
    'SectionHeader': ('Heading2', {'fontSize': 13, 'spaceBefore': 14, 'spaceAfter': 6}),
    'BodyText': ('Normal', {'fontSize': 9.5, 'leading': 13, 'spaceAfter': 4}),
    'Caption': ('Italic', {'fontSize': 8, 'spaceBefore': 3}),
}


def get_typography_styles() -> dict:
    sheet = getSampleStyleSheet()
    styles = {}
    for name, (parent, overrides) in _PARAGRAPHS.items():
        colour = PALETTE['muted'] if name == 'Caption' else PALETTE['ink']
        styles[name] = ParagraphStyle(name, parent=sheet[parent], textColor=colour, **overrides)
    return styles


def data_table_style(label_columns: int = 1) -> TableStyle:
    """Banded rows; the leading label columns align left, figures right."""
    return TableStyle([
        ('FONTNAME', (0, 0), (-1, 0), 'Helvetica-Bold'),
        ('FONTSIZE', (0, 0), (-1, -1), 8.5),
        ('TEXTCOLOR', (0, 0), (-1, 0), PALETTE['ink']),
        ('LINEBELOW', (0, 0), (-1, 0), 1.0, PALETTE['ink']),
        ('LINEBELOW', (0, -1), (-1, -1), 0.5, PALETTE['rule']),
        ('ALIGN', (0, 0), (label_columns - 1, -1), 'LEFT'),
        ('ALIGN', (label_columns, 0), (-1, -1), 'RIGHT'),
        ('ROWBACKGROUNDS', (0, 1), (-1, -1), [colors.white, PALETTE['band']]),
        ('TOPPADDING', (0, 0), (-1, -1), 4),
        ('BOTTOMPADDING', (0, 0), (-1, -1), 4),
    ])
